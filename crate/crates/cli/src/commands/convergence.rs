//! `convergence`: refinement ladder driven by one aggregated noise tree.
//! Writes the L^r sup-norm errors between consecutive refinements with a
//! log-log slope fit, and the coincidence-probability curve against its
//! closed-form lower bound. A weak slope is reported, not fatal.

use mcvorder_core::numeric::{fmt_sig17, log_log_slope};
use mcvorder_core::plot::{svg_plot, CurveSeries};
use mcvorder_core::scheme::{coincidence_probability, simulate, NoiseGrid, SchemeConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, OutDir};

pub fn run(cfg: &ExperimentConfig, scheme: &SchemeConfig, mut out: OutDir) -> Result<(), CliError> {
    let model_name = match (&cfg.convergence.model, cfg.models.len()) {
        (Some(name), _) => name.clone(),
        (None, 1) => cfg.models[0].0.clone(),
        (None, _) => {
            return Err(CliError::config(
                "[convergence] must name a `model` when several models are defined",
            ))
        }
    };
    let model = cfg.model(&model_name)?.clone();
    let ladder = &cfg.convergence.ladder;
    if ladder.len() < 3 {
        return Err(CliError::config(
            "convergence ladder needs at least three levels for a slope fit",
        ));
    }

    let mut manifest = Manifest::new("convergence", scheme.master_seed);
    manifest.kv("model", &model_name);
    manifest.kv("ladder", ladder.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","));
    manifest.kv("r_exponent", cfg.convergence.r_exponent);
    manifest.kv("truncation", format!("{:?}", scheme.truncation));

    // Noise is generated once at the finest level; coarser levels are
    // pairwise aggregations of the same tree.
    let n = scheme.particles_n;
    let finest = *ladder.last().unwrap();
    let mut grids = vec![NoiseGrid::generate(scheme.master_seed, n, finest)];
    for _ in 0..ladder.len() - 1 {
        grids.push(grids.last().unwrap().coarsen()?);
    }
    grids.reverse(); // ladder order, coarse to fine

    let mut ensembles = Vec::with_capacity(ladder.len());
    for grid in &grids {
        let mut level_scheme = scheme.clone();
        level_scheme.steps_m = grid.steps();
        super::record_h_constraint(&mut manifest, &level_scheme, &model.coeffs);
        let initial = model.initial.realize(n, scheme.master_seed, &model_name)?;
        ensembles.push(simulate(&model.coeffs, &initial, &level_scheme, grid)?);
    }

    let r = cfg.convergence.r_exponent;
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    let mut errors_csv = String::from("m_coarse,h,error\n");
    for w in ensembles.windows(2) {
        let (coarse, fine) = (&w[0], &w[1]);
        let mc = coarse.steps();
        let err_r: f64 = (0..n)
            .map(|i| {
                (0..=mc)
                    .map(|s| (coarse.value(i, s) - fine.value(i, 2 * s)).abs())
                    .fold(0.0f64, f64::max)
                    .powf(r)
            })
            .sum::<f64>()
            / n as f64;
        let h = scheme.horizon_t / mc as f64;
        let err = err_r.powf(1.0 / r);
        errors_csv.push_str(&format!("{mc},{},{}\n", fmt_sig17(h), fmt_sig17(err)));
        hs.push(h);
        errors.push(err);
    }
    out.write("refinement_errors.csv", &errors_csv)?;

    let all_positive = errors.iter().all(|e| *e > 0.0);
    let slope = if all_positive {
        log_log_slope(&hs, &errors)
    } else {
        f64::NAN // zero-error ladders (deterministic models) have no slope
    };
    out.write(
        "convergence_fit.csv",
        &format!("slope,points\n{},{}\n", fmt_sig17(slope), errors.len()),
    )?;
    manifest.kv("slope", slope);

    // Coincidence probability of the truncated scheme along the ladder.
    let mut coincidence_csv = String::from("m,empirical,lower_bound\n");
    for &m in ladder {
        let mut level_scheme = scheme.clone();
        level_scheme.steps_m = m;
        let (empirical, bound) = coincidence_probability(
            &level_scheme,
            cfg.convergence.coincidence_lip,
            cfg.convergence.coincidence_trials,
        );
        coincidence_csv.push_str(&format!(
            "{m},{},{}\n",
            fmt_sig17(empirical),
            fmt_sig17(bound)
        ));
    }
    out.write("coincidence.csv", &coincidence_csv)?;

    if cfg.outputs.svg && all_positive {
        let pts: Vec<(f64, f64)> = hs.iter().zip(&errors).map(|(h, e)| (h.ln(), e.ln())).collect();
        let svg = svg_plot(
            &format!("refinement errors: {model_name}"),
            "ln h",
            "ln error",
            &[CurveSeries::new("ln error", pts)],
        );
        out.write("refinement_errors.svg", &svg)?;
    }

    manifest.section("config");
    manifest.raw(&cfg.source);
    out.finish(manifest)
}
