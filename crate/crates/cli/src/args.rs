//! Hand-rolled argument parsing for the five subcommands.

use crate::error::CliError;

pub const USAGE: &str = "mcvorder <command> [args]

commands:
  simulate     --config <path> [--seed <u64>] [--out <dir>] [--threads <n>] [--allow-large-h]
  bound-check  --config <path> [--seed <u64>] [--out <dir>] [--threads <n>] [--allow-large-h]
  order-check  --config <path> [--seed <u64>] [--out <dir>] [--threads <n>] [--allow-large-h]
  convergence  --config <path> [--seed <u64>] [--out <dir>] [--threads <n>] [--allow-large-h]
  oracle <suite> [--out <dir>] [--threads <n>]
               suite: truncated_gaussian | monotonicity | counterexample | mcv_equivalence | all
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Simulate,
    BoundCheck,
    OrderCheck,
    Oracle(String),
    Convergence,
}

#[derive(Debug, Clone)]
pub struct Args {
    pub command: Command,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub allow_large_h: bool,
    pub out: Option<String>,
}

pub fn parse<I: IntoIterator<Item = String>>(argv: I) -> Result<Args, CliError> {
    let mut it = argv.into_iter();
    let command = match it.next().as_deref() {
        Some("simulate") => Command::Simulate,
        Some("bound-check") => Command::BoundCheck,
        Some("order-check") => Command::OrderCheck,
        Some("convergence") => Command::Convergence,
        Some("oracle") => {
            let suite = it
                .next()
                .ok_or_else(|| CliError::Usage("oracle needs a suite name".into()))?;
            if suite.starts_with("--") {
                return Err(CliError::Usage(format!(
                    "oracle needs a suite name before flags, got `{suite}`"
                )));
            }
            Command::Oracle(suite)
        }
        Some(other) => {
            return Err(CliError::Usage(format!("unknown command `{other}`")));
        }
        None => return Err(CliError::Usage("missing command".into())),
    };

    let mut args = Args {
        command,
        config: None,
        seed: None,
        threads: None,
        allow_large_h: false,
        out: None,
    };
    while let Some(flag) = it.next() {
        let mut value_of = |name: &str| {
            it.next()
                .ok_or_else(|| CliError::Usage(format!("{name} needs a value")))
        };
        match flag.as_str() {
            "--config" => args.config = Some(value_of("--config")?),
            "--out" => args.out = Some(value_of("--out")?),
            "--seed" => {
                let raw = value_of("--seed")?;
                args.seed = Some(raw.parse().map_err(|_| {
                    CliError::Usage(format!("--seed must be an unsigned integer, got `{raw}`"))
                })?);
            }
            "--threads" => {
                let raw = value_of("--threads")?;
                args.threads = Some(raw.parse().map_err(|_| {
                    CliError::Usage(format!("--threads must be a positive integer, got `{raw}`"))
                })?);
            }
            "--allow-large-h" => args.allow_large_h = true,
            other => return Err(CliError::Usage(format!("unknown flag `{other}`"))),
        }
    }

    let needs_config = !matches!(args.command, Command::Oracle(_));
    if needs_config && args.config.is_none() {
        return Err(CliError::Usage("--config <path> is required".into()));
    }
    Ok(args)
}
