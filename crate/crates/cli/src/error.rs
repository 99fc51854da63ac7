//! Error classes mapped onto disjoint process exit codes:
//! 2 configuration, 3 numerical blow-up, 4 order violation, 5 oracle
//! failure; I/O problems exit 1.

use mcvorder_core::measures::MeasureError;
use mcvorder_core::oracles::OracleError;
use mcvorder_core::paths::PathError;
use mcvorder_core::scheme::SchemeError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ORDER: i32 = 4;
pub const EXIT_ORACLE: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error{}: {message}", match line { Some(l) => format!(" (line {l})"), None => String::new() })]
    Config { line: Option<usize>, message: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            line: None,
            message: message.into(),
        }
    }

    pub fn config_at(line: usize, message: impl Into<String>) -> Self {
        CliError::Config {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::OrderViolation(_) => EXIT_ORDER,
            CliError::OracleFailure(_) => EXIT_ORACLE,
            CliError::Io(_) => 1,
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Blowup { .. } => CliError::Numeric(e.to_string()),
            other => CliError::config(other.to_string()),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<PathError> for CliError {
    fn from(e: PathError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::OracleFailure(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_disjoint_by_class() {
        let errs = [
            CliError::Usage("u".into()),
            CliError::config("c"),
            CliError::Numeric("n".into()),
            CliError::OrderViolation("o".into()),
            CliError::OracleFailure("q".into()),
        ];
        assert_eq!(errs[0].exit_code(), 2);
        assert_eq!(errs[1].exit_code(), 2);
        assert_eq!(errs[2].exit_code(), 3);
        assert_eq!(errs[3].exit_code(), 4);
        assert_eq!(errs[4].exit_code(), 5);
    }

    #[test]
    fn blowup_maps_to_numeric_class() {
        let e = SchemeError::Blowup {
            step: 1,
            particle: 2,
            state: 3.0,
            noise: 0.5,
            value: f64::NAN,
        };
        assert_eq!(CliError::from(e).exit_code(), EXIT_NUMERIC);
        let e = SchemeError::BadConfig("bad".into());
        assert_eq!(CliError::from(e).exit_code(), EXIT_CONFIG);
    }
}
