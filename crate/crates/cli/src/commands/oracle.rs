//! `oracle`: quadrature and brute-force verification suites, independent of
//! the Monte Carlo engine. Any failing check exits with code 5.

use mcvorder_core::oracles::{
    suite_all, suite_counterexample, suite_mcv_equivalence, suite_monotonicity,
    suite_truncated_gaussian, OracleReport,
};

use crate::error::CliError;
use crate::manifest::{Manifest, OutDir};

pub fn run(suite: &str, mut out: OutDir) -> Result<(), CliError> {
    let report: OracleReport = match suite {
        "truncated_gaussian" => suite_truncated_gaussian()?,
        "monotonicity" => suite_monotonicity()?,
        "counterexample" => suite_counterexample()?,
        "mcv_equivalence" => suite_mcv_equivalence(10_000, 0xacce5),
        "all" => suite_all()?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown oracle suite `{other}` (truncated_gaussian, monotonicity, \
                 counterexample, mcv_equivalence, all)"
            )))
        }
    };

    let text = report.to_text();
    print!("{text}");
    out.write("oracle_report.csv", &report.to_csv())?;
    out.write("oracle_report.txt", &text)?;

    let mut manifest = Manifest::new("oracle", 0);
    manifest.kv("suite", suite);
    manifest.kv("checks", report.rows.len());
    let failed = report.rows.iter().filter(|r| !r.pass).count();
    manifest.kv("failed", failed);
    out.finish(manifest)?;

    if report.passed() {
        Ok(())
    } else {
        Err(CliError::OracleFailure(format!(
            "{failed} of {} checks failed in suite `{suite}`",
            report.rows.len()
        )))
    }
}
