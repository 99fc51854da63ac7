//! Command-line driver: configuration parsing, experiment orchestration and
//! report/plot emission for the simulation library. Every command is a pure
//! function of (config, seed): reruns produce byte-identical CSVs.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use args::{Args, Command};
use config::ExperimentConfig;
use error::CliError;
use manifest::OutDir;

/// Runs one invocation and returns the process exit code.
pub fn run_cli<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    match try_run(argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mcvorder: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("{}", args::USAGE);
            }
            e.exit_code()
        }
    }
}

fn try_run<I: IntoIterator<Item = String>>(argv: I) -> Result<(), CliError> {
    let parsed: Args = args::parse(argv)?;
    if let Some(threads) = parsed.threads {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    if let Command::Oracle(suite) = &parsed.command {
        let out = OutDir::create(parsed.out.as_deref().unwrap_or("out"))?;
        return commands::oracle::run(suite, out);
    }

    let cfg = ExperimentConfig::load(parsed.config.as_deref().expect("checked by parser"))?;
    let scheme = cfg.scheme_config(parsed.seed, parsed.allow_large_h);
    scheme.validate()?;
    let out_dir = parsed.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    let out = OutDir::create(&out_dir)?;

    match parsed.command {
        Command::Simulate => commands::simulate::run(&cfg, &scheme, out),
        Command::BoundCheck => commands::bound_check::run(&cfg, &scheme, out),
        Command::OrderCheck => commands::order_check::run(&cfg, &scheme, out),
        Command::Convergence => commands::convergence::run(&cfg, &scheme, out),
        Command::Oracle(_) => unreachable!("handled above"),
    }
}
