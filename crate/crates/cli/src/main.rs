fn main() {
    let code = mcvorder_cli::run_cli(std::env::args().skip(1));
    std::process::exit(code);
}
