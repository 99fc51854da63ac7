//! `bound-check`: sandwich a mean-field model between two simpler models on
//! one noise grid and certify, per functional and per grid time, that the
//! three estimated curves are ordered. The ordering test uses the paired
//! per-particle differences, whose common-noise coupling makes the margins
//! sharp; exit code 4 reports the first violation beyond the slack.

use mcvorder_core::coefficients::{validate_assumption_ii, ModelPair};
use mcvorder_core::numeric::{fmt_sig17, mean_and_stderr};
use mcvorder_core::paths::{
    curve_csv, functional_values_at_step, spot_check_composite, Estimate, FunctionalKind,
    FunctionalSpec,
};
use mcvorder_core::plot::{svg_plot, CurveSeries};
use mcvorder_core::scheme::{simulate, NoiseGrid, ParticleEnsemble, SchemeConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, OutDir};

/// Slack multiplier on the paired standard error for ordering violations
/// and strict-betweenness margins.
pub const ORDER_SLACK_Z: f64 = 3.0;

struct PairMargin {
    t: f64,
    pair: &'static str,
    diff_mean: f64,
    diff_se: f64,
}

impl PairMargin {
    fn ordered(&self) -> bool {
        self.diff_mean >= -ORDER_SLACK_Z * self.diff_se
    }

    fn strictly_positive(&self) -> bool {
        self.diff_mean > ORDER_SLACK_Z * self.diff_se
    }
}

fn paired_margin(t: f64, pair: &'static str, low: &[f64], high: &[f64]) -> PairMargin {
    let diffs: Vec<f64> = high.iter().zip(low).map(|(h, l)| h - l).collect();
    let (diff_mean, diff_se) = mean_and_stderr(&diffs);
    PairMargin {
        t,
        pair,
        diff_mean,
        diff_se,
    }
}

/// Curve points plus the per-particle values behind each point.
type CurveWithValues = (Vec<(f64, Estimate)>, Vec<Vec<f64>>);

fn estimate_curve(ens: &ParticleEnsemble, spec: &FunctionalSpec) -> Result<CurveWithValues, CliError> {
    let times = ens.times();
    // Sup and terminal functionals do not depend on the query time.
    let constant_in_t = matches!(
        spec.kind,
        FunctionalKind::SupPath | FunctionalKind::TerminalValue
    );
    let mut points = Vec::with_capacity(times.len());
    let mut all_values: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    for (m, &t) in times.iter().enumerate() {
        let values = if constant_in_t && m > 0 {
            all_values[0].clone()
        } else {
            functional_values_at_step(ens, spec, m)?
        };
        points.push((t, Estimate::from_values(&values)));
        all_values.push(values);
    }
    Ok((points, all_values))
}

pub fn run(cfg: &ExperimentConfig, scheme: &SchemeConfig, mut out: OutDir) -> Result<(), CliError> {
    let lower_name = cfg.role("lower", &cfg.roles.lower)?;
    let mid_name = cfg.role("mid", &cfg.roles.mid)?;
    let upper_name = cfg.role("upper", &cfg.roles.upper)?;
    let lower = cfg.model(&lower_name)?.clone();
    let mid = cfg.model(&mid_name)?.clone();
    let upper = cfg.model(&upper_name)?.clone();

    let mut manifest = Manifest::new("bound-check", scheme.master_seed);
    manifest.kv("h", scheme.step_h());
    manifest.kv("order_slack_z", ORDER_SLACK_Z);
    manifest.kv("roles", format!("lower={lower_name} mid={mid_name} upper={upper_name}"));
    for spec in [&lower, &mid, &upper] {
        super::record_h_constraint(&mut manifest, scheme, &spec.coeffs);
    }

    let n = scheme.particles_n;
    let seed = scheme.master_seed;
    let init_lower = lower.initial.realize(n, seed, &lower_name)?;
    let init_mid = mid.initial.realize(n, seed, &mid_name)?;
    let init_upper = upper.initial.realize(n, seed, &upper_name)?;
    if init_lower.samples() != init_mid.samples() || init_mid.samples() != init_upper.samples() {
        return Err(CliError::config(
            "bound-check requires shared initial samples across lower/mid/upper",
        ));
    }

    // Assumption probes are advisory here: findings land in the manifest
    // and a CSV, certification is the empirical check below.
    let pair_low = ModelPair::new(
        lower.coeffs.clone(),
        mid.coeffs.clone(),
        cfg.roles.relation_lower.0,
    );
    let pair_up = ModelPair::new(
        mid.coeffs.clone(),
        upper.coeffs.clone(),
        cfg.roles.relation_upper.0,
    );
    for (tag, pair) in [("lower_mid", &pair_low), ("mid_upper", &pair_up)] {
        let report = validate_assumption_ii(pair, 1000);
        manifest.kv(
            &format!("assumption_probes.{tag}"),
            format!(
                "{} violations / {} probes ({})",
                report.violations.len(),
                report.probes,
                pair.claimed_relation
            ),
        );
        out.write(&format!("assumption_probes_{tag}.csv"), &report.to_csv())?;
    }

    let noise = NoiseGrid::generate(seed, n, scheme.steps_m);
    let ens_lower = simulate(&lower.coeffs, &init_lower, scheme, &noise)?;
    let ens_mid = simulate(&mid.coeffs, &init_mid, scheme, &noise)?;
    let ens_upper = simulate(&upper.coeffs, &init_upper, scheme, &noise)?;

    let mut first_violation: Option<String> = None;
    for (fname, spec) in cfg.functionals_or_default() {
        if let FunctionalKind::UserComposite(_) = spec.kind {
            let warnings =
                spot_check_composite(&ens_mid, &spec, scheme.horizon_t, 64, seed ^ 0x5f0f)?;
            manifest.kv(
                &format!("composite_spot_check.{fname}"),
                format!("{} warnings", warnings.len()),
            );
            for w in warnings.iter().take(5) {
                manifest.kv(&format!("composite_spot_check.{fname}.warning"), w);
            }
        }
        if !spec.monotone_convex_declared {
            manifest.kv(
                &format!("functional.{fname}"),
                "declared NOT monotone convex; ordering is not guaranteed by theory",
            );
        }

        let (curve_lower, vals_lower) = estimate_curve(&ens_lower, &spec)?;
        let (curve_mid, vals_mid) = estimate_curve(&ens_mid, &spec)?;
        let (curve_upper, vals_upper) = estimate_curve(&ens_upper, &spec)?;

        for (model, curve) in [
            (&lower_name, &curve_lower),
            (&mid_name, &curve_mid),
            (&upper_name, &curve_upper),
        ] {
            out.write(&format!("curve_{fname}_{model}.csv"), &curve_csv(curve))?;
        }

        let mut margins_csv = String::from("t,pair,diff_mean,diff_se,ordered,strict\n");
        let times = ens_lower.times();
        for (m, &t) in times.iter().enumerate() {
            for margin in [
                paired_margin(t, "lower_mid", &vals_lower[m], &vals_mid[m]),
                paired_margin(t, "mid_upper", &vals_mid[m], &vals_upper[m]),
            ] {
                margins_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    fmt_sig17(margin.t),
                    margin.pair,
                    fmt_sig17(margin.diff_mean),
                    fmt_sig17(margin.diff_se),
                    margin.ordered(),
                    margin.strictly_positive()
                ));
                if !margin.ordered() && first_violation.is_none() {
                    first_violation = Some(format!(
                        "functional `{fname}`, pair {}, t = {}: mean margin {} below -{} * stderr {}",
                        margin.pair, margin.t, margin.diff_mean, ORDER_SLACK_Z, margin.diff_se
                    ));
                }
            }
        }
        out.write(&format!("margins_{fname}.csv"), &margins_csv)?;

        if cfg.outputs.svg {
            let series = [
                (&lower_name, &curve_lower),
                (&mid_name, &curve_mid),
                (&upper_name, &curve_upper),
            ]
            .into_iter()
            .map(|(label, curve)| {
                let pts: Vec<(f64, f64)> = curve.iter().map(|(t, e)| (*t, e.value)).collect();
                let band: Vec<(f64, f64)> = curve.iter().map(|(_, e)| e.ci95).collect();
                CurveSeries::new(label.as_str(), pts).with_band(band)
            })
            .collect::<Vec<_>>();
            let svg = svg_plot(
                &format!("bound check: {fname}"),
                "t",
                "estimate",
                &series,
            );
            out.write(&format!("curves_{fname}.svg"), &svg)?;
        }
    }

    if let Some(v) = &first_violation {
        manifest.kv("violation", v);
    }
    manifest.section("config");
    manifest.raw(&cfg.source);
    out.finish(manifest)?;
    match first_violation {
        Some(v) => Err(CliError::OrderViolation(v)),
        None => Ok(()),
    }
}
