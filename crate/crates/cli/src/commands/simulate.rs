//! `simulate`: run every configured model on one shared noise grid and
//! write ensemble CSVs plus stop-loss curves of thinned marginals.

use mcvorder_core::measures::default_strike_grid;
use mcvorder_core::scheme::{simulate, NoiseGrid, SchemeConfig};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{Manifest, OutDir};

pub fn run(cfg: &ExperimentConfig, scheme: &SchemeConfig, mut out: OutDir) -> Result<(), CliError> {
    if cfg.models.is_empty() {
        return Err(CliError::config("simulate needs at least one [model.*] section"));
    }
    let mut manifest = Manifest::new("simulate", scheme.master_seed);
    manifest.kv("h", scheme.step_h());
    let noise = NoiseGrid::generate(scheme.master_seed, scheme.particles_n, scheme.steps_m);

    for (name, spec) in &cfg.models {
        super::record_h_constraint(&mut manifest, scheme, &spec.coeffs);
        let initial = spec.initial.realize(scheme.particles_n, scheme.master_seed, name)?;
        let ens = simulate(&spec.coeffs, &initial, scheme, &noise)?;
        out.write(&format!("{name}_ensemble.csv"), &ens.to_csv())?;

        let stride = cfg.outputs.marginal_stride.max(1);
        let mut steps: Vec<usize> = (0..=scheme.steps_m).step_by(stride).collect();
        if *steps.last().unwrap() != scheme.steps_m {
            steps.push(scheme.steps_m);
        }
        for m in steps {
            let marginal = ens.marginal(m);
            let strikes = default_strike_grid(marginal, marginal);
            let curve = marginal.stop_loss_curve(&strikes)?;
            out.write(&format!("{name}_marginal_{m:04}.csv"), &curve.to_csv())?;
        }
    }

    manifest.section("config");
    manifest.raw(&cfg.source);
    out.finish(manifest)
}
