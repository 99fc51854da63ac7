//! Truncated and regular Euler particle schemes with common-noise coupling.
//!
//! The driving noise is a deterministic grid of standard normal draws keyed
//! by (seed, particle, step); truncated mode replaces each draw Z by
//! `Z * 1{|Z| <= 1/(2 sqrt(h) Lip_x(sigma))}`, which restores propagation of
//! monotonicity without assuming |sigma| non-decreasing. Coupled processes
//! share one grid so pathwise comparisons and order margins are
//! variance-reduced.

use rayon::prelude::*;

use crate::coefficients::{CoefficientSet, ModelPair};
use crate::measures::{EmpiricalMeasure, MeasureError};
use crate::rng::keyed_normal;

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid scheme config: {0}")]
    BadConfig(String),
    #[error(
        "time step h = {h} violates h < 1/(2*lip_x_drift) = {bound} for model `{model}`; \
         rerun with allow_large_h to override"
    )]
    StepConstraint { h: f64, bound: f64, model: String },
    #[error("noise grid is {got_particles}x{got_steps}, config needs {particles}x{steps}")]
    ShapeMismatch {
        particles: usize,
        steps: usize,
        got_particles: usize,
        got_steps: usize,
    },
    #[error("initial measure has {got} samples, config needs {expected} particles")]
    InitialSize { expected: usize, got: usize },
    #[error(
        "non-finite state at step {step}, particle {particle}: \
         previous state {state}, draw {noise}, produced {value}"
    )]
    Blowup {
        step: usize,
        particle: usize,
        state: f64,
        noise: f64,
        value: f64,
    },
    #[error("cannot coarsen a noise grid with an odd step count {0}")]
    OddSteps(usize),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Whether Gaussian increments are truncated at the scheme threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    Truncated,
    Regular,
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub horizon_t: f64,
    pub steps_m: usize,
    pub particles_n: usize,
    pub p_exponent: f64,
    pub master_seed: u64,
    pub truncation: TruncationMode,
    /// Overrides the hard step-size constraint `h < 1/(2*lip_x_drift)`.
    pub allow_large_h: bool,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), SchemeError> {
        if !(self.horizon_t.is_finite() && self.horizon_t > 0.0) {
            return Err(SchemeError::BadConfig(format!(
                "horizon_t must be positive, got {}",
                self.horizon_t
            )));
        }
        if self.steps_m < 1 {
            return Err(SchemeError::BadConfig("steps_m must be >= 1".into()));
        }
        if self.particles_n < 2 {
            return Err(SchemeError::BadConfig("particles_n must be >= 2".into()));
        }
        if !(self.p_exponent.is_finite() && self.p_exponent >= 2.0) {
            return Err(SchemeError::BadConfig(format!(
                "p_exponent must be >= 2, got {}",
                self.p_exponent
            )));
        }
        Ok(())
    }

    pub fn step_h(&self) -> f64 {
        self.horizon_t / self.steps_m as f64
    }

    /// The order-propagation results need h < 1/(2*lip_x_drift); violating it
    /// is a hard error unless the override flag is set. Models with zero
    /// drift Lipschitz constant impose no constraint.
    pub fn check_step_constraint(&self, model: &CoefficientSet) -> Result<(), SchemeError> {
        if self.allow_large_h || model.lip_x_drift <= 0.0 {
            return Ok(());
        }
        let bound = 1.0 / (2.0 * model.lip_x_drift);
        let h = self.step_h();
        if h >= bound {
            return Err(SchemeError::StepConstraint {
                h,
                bound,
                model: model.label.clone(),
            });
        }
        Ok(())
    }
}

/// N x M grid of standard normal draws, each a pure function of
/// (seed, particle, step). Bit-reproducible for a fixed key set, regardless
/// of how generation is parallelized.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    particles: usize,
    steps: usize,
    values: Vec<f64>, // row-major: particle * steps + step
}

impl NoiseGrid {
    pub fn generate(seed: u64, particles: usize, steps: usize) -> Self {
        let values: Vec<f64> = (0..particles * steps)
            .into_par_iter()
            .map(|idx| keyed_normal(seed, (idx / steps) as u64, (idx % steps) as u64))
            .collect();
        Self {
            particles,
            steps,
            values,
        }
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn z(&self, particle: usize, step: usize) -> f64 {
        self.values[particle * self.steps + step]
    }

    /// Pairwise aggregation onto the twice-coarser grid:
    /// `Z_m = (Z_{2m} + Z_{2m+1}) / sqrt(2)`. Convergence studies generate
    /// noise at the finest ladder level and derive every coarser level this
    /// way, so all refinements ride the same Brownian path.
    pub fn coarsen(&self) -> Result<NoiseGrid, SchemeError> {
        if !self.steps.is_multiple_of(2) {
            return Err(SchemeError::OddSteps(self.steps));
        }
        let half = self.steps / 2;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let values: Vec<f64> = (0..self.particles * half)
            .into_par_iter()
            .map(|idx| {
                let (i, m) = (idx / half, idx % half);
                (self.z(i, 2 * m) + self.z(i, 2 * m + 1)) * inv_sqrt2
            })
            .collect();
        Ok(NoiseGrid {
            particles: self.particles,
            steps: half,
            values,
        })
    }
}

/// Truncation threshold `1/(2 sqrt(h) lip_sigma_x)`; infinite (no
/// truncation) when the diffusion has Lipschitz constant zero.
#[inline]
pub fn truncation_threshold(h: f64, lip_sigma_x: f64) -> f64 {
    debug_assert!(h > 0.0);
    if lip_sigma_x <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * h.sqrt() * lip_sigma_x)
    }
}

/// The truncation map: z when |z| is at or under the threshold, else 0.
#[inline]
pub fn truncate(z: f64, h: f64, lip_sigma_x: f64) -> f64 {
    if z.abs() <= truncation_threshold(h, lip_sigma_x) {
        z
    } else {
        0.0
    }
}

/// One Euler update `x + h b(t,x,mu) + sqrt(h) sigma(t,x,mu) z`.
/// A non-finite result is reported by `simulate` with full context.
#[inline]
pub fn euler_step(
    x: f64,
    t: f64,
    mu: &EmpiricalMeasure,
    z_trunc: f64,
    model: &CoefficientSet,
    h: f64,
) -> f64 {
    x + h * model.drift(t, x, mu) + h.sqrt() * model.diffusion(t, x, mu) * z_trunc
}

/// N particle paths on the time grid plus the per-step empirical marginals.
/// Immutable after simulation; safe to share across threads.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    columns: Vec<Vec<f64>>, // columns[m][i], m = 0..=M
    marginals: Vec<EmpiricalMeasure>,
    pub config: SchemeConfig,
    pub model_label: String,
}

impl ParticleEnsemble {
    pub fn particles(&self) -> usize {
        self.config.particles_n
    }

    pub fn steps(&self) -> usize {
        self.config.steps_m
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon_t
    }

    /// Particle states at step m (unsorted, particle order).
    pub fn column(&self, m: usize) -> &[f64] {
        &self.columns[m]
    }

    #[inline]
    pub fn value(&self, particle: usize, step: usize) -> f64 {
        self.columns[step][particle]
    }

    /// Copies particle i's path into `buf` (length M+1 afterwards).
    pub fn gather_path(&self, particle: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.columns.iter().map(|c| c[particle]));
    }

    pub fn marginal(&self, m: usize) -> &EmpiricalMeasure {
        &self.marginals[m]
    }

    pub fn marginals(&self) -> &[EmpiricalMeasure] {
        &self.marginals
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.config.step_h();
        (0..=self.config.steps_m).map(|m| m as f64 * h).collect()
    }

    /// CSV with header `particle,step,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("particle,step,value\n");
        for i in 0..self.particles() {
            for (m, col) in self.columns.iter().enumerate() {
                out.push_str(&format!("{i},{m},{}\n", crate::numeric::fmt_sig17(col[i])));
            }
        }
        out
    }
}

/// Runs the particle scheme: at each step the marginal is frozen from the
/// pre-step column, then every particle advances with its own draw.
pub fn simulate(
    model: &CoefficientSet,
    initial: &EmpiricalMeasure,
    config: &SchemeConfig,
    noise: &NoiseGrid,
) -> Result<ParticleEnsemble, SchemeError> {
    config.validate()?;
    config.check_step_constraint(model)?;
    if initial.len() != config.particles_n {
        return Err(SchemeError::InitialSize {
            expected: config.particles_n,
            got: initial.len(),
        });
    }
    if noise.particles() != config.particles_n || noise.steps() != config.steps_m {
        return Err(SchemeError::ShapeMismatch {
            particles: config.particles_n,
            steps: config.steps_m,
            got_particles: noise.particles(),
            got_steps: noise.steps(),
        });
    }

    let h = config.step_h();
    let sqrt_h = h.sqrt();
    let threshold = match config.truncation {
        TruncationMode::Truncated => truncation_threshold(h, model.lip_x_diffusion),
        TruncationMode::Regular => f64::INFINITY,
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(config.steps_m + 1);
    let mut marginals: Vec<EmpiricalMeasure> = Vec::with_capacity(config.steps_m + 1);
    columns.push(initial.samples().to_vec());
    marginals.push(initial.clone());

    for m in 0..config.steps_m {
        let t = m as f64 * h;
        let mu = &marginals[m];
        let prev = &columns[m];
        let next: Result<Vec<f64>, SchemeError> = prev
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let raw = noise.z(i, m);
                let z = if raw.abs() <= threshold { raw } else { 0.0 };
                let value =
                    x + h * model.drift(t, x, mu) + sqrt_h * model.diffusion(t, x, mu) * z;
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(SchemeError::Blowup {
                        step: m,
                        particle: i,
                        state: x,
                        noise: raw,
                        value,
                    })
                }
            })
            .collect();
        let next = next?;
        marginals.push(EmpiricalMeasure::new(next.clone())?);
        columns.push(next);
    }

    Ok(ParticleEnsemble {
        columns,
        marginals,
        config: config.clone(),
        model_label: model.label.clone(),
    })
}

/// Simulates both models of a pair on one shared noise grid (common random
/// numbers). Truncation thresholds are per model, from each declared
/// diffusion Lipschitz constant.
pub fn simulate_coupled(
    pair: &ModelPair,
    initial_lower: &EmpiricalMeasure,
    initial_upper: &EmpiricalMeasure,
    config: &SchemeConfig,
) -> Result<(ParticleEnsemble, ParticleEnsemble), SchemeError> {
    config.validate()?;
    let noise = NoiseGrid::generate(config.master_seed, config.particles_n, config.steps_m);
    let lower = simulate(&pair.lower, initial_lower, config, &noise)?;
    let upper = simulate(&pair.upper, initial_upper, config, &noise)?;
    Ok((lower, upper))
}

/// Empirical probability that an M-step noise row never exceeds the
/// truncation threshold, together with the closed-form lower bound
/// `(1 - exp(-M/(8 T lip^2)))^M` for that probability.
pub fn coincidence_probability(
    config: &SchemeConfig,
    lip_sigma_x: f64,
    trials: usize,
) -> (f64, f64) {
    assert!(trials >= 1);
    let m = config.steps_m;
    let t = config.horizon_t;
    let threshold = truncation_threshold(config.step_h(), lip_sigma_x);
    let hits: usize = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            (0..m).all(|step| {
                keyed_normal(config.master_seed, trial as u64, step as u64).abs() <= threshold
            })
        })
        .count();
    let empirical = hits as f64 / trials as f64;
    let lower_bound = if lip_sigma_x <= 0.0 {
        1.0
    } else {
        (1.0 - (-(m as f64) / (8.0 * t * lip_sigma_x * lip_sigma_x)).exp()).powi(m as i32)
    };
    (empirical, lower_bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{gbm, Relation};
    use crate::measures::{check_mcv, default_strike_grid};
    use std::sync::Arc;

    fn zero_model() -> CoefficientSet {
        CoefficientSet::from_fns(
            "zero",
            Arc::new(|_, _, _: &EmpiricalMeasure| 0.0),
            Arc::new(|_, _, _: &EmpiricalMeasure| 0.0),
            0.0,
            0.0,
        )
        .unwrap()
    }

    fn config(n: usize, m: usize, seed: u64) -> SchemeConfig {
        SchemeConfig {
            horizon_t: 1.0,
            steps_m: m,
            particles_n: n,
            p_exponent: 2.0,
            master_seed: seed,
            truncation: TruncationMode::Truncated,
            allow_large_h: false,
        }
    }

    #[test]
    fn truncation_keeps_small_and_kills_large() {
        // Threshold at h = 0.01, lip = 1 is 1/(2*0.1) = 5.
        assert_eq!(truncation_threshold(0.01, 1.0), 5.0);
        assert_eq!(truncate(1.0, 0.01, 1.0), 1.0);
        assert_eq!(truncate(6.0, 0.01, 1.0), 0.0);
        assert_eq!(truncate(5.0, 0.01, 1.0), 5.0); // boundary included
        for i in 0..200u64 {
            let z = keyed_normal(3, 0, i) * 4.0;
            assert_eq!(truncate(-z, 0.01, 1.0), -truncate(z, 0.01, 1.0));
        }
    }

    #[test]
    fn zero_lipschitz_means_no_truncation() {
        assert_eq!(truncation_threshold(0.01, 0.0), f64::INFINITY);
        assert_eq!(truncate(1e12, 0.01, 0.0), 1e12);
    }

    #[test]
    fn euler_step_arithmetic() {
        let mu = EmpiricalMeasure::dirac(1.0, 2).unwrap();
        let zero = zero_model();
        assert_eq!(euler_step(3.5, 0.0, &mu, 2.0, &zero, 0.01), 3.5);

        let g = gbm(0.05, 1.0);
        let v0 = euler_step(1.0, 0.0, &mu, 0.0, &g, 0.01);
        assert!((v0 - 1.0005).abs() < 1e-15);
        let v2 = euler_step(1.0, 0.0, &mu, 2.0, &g, 0.01);
        assert!((v2 - 1.2005).abs() < 1e-15);
    }

    #[test]
    fn zero_model_keeps_states_constant() {
        let cfg = config(8, 1, 7);
        let initial = EmpiricalMeasure::new(vec![0.0, 1.0, -2.0, 3.0, 0.5, 0.25, -1.0, 9.0]).unwrap();
        let noise = NoiseGrid::generate(cfg.master_seed, 8, 1);
        let ens = simulate(&zero_model(), &initial, &cfg, &noise).unwrap();
        assert_eq!(ens.column(0), ens.column(1));
    }

    #[test]
    fn noise_is_reproducible_and_seed_sensitive() {
        let a = NoiseGrid::generate(11, 16, 8);
        let b = NoiseGrid::generate(11, 16, 8);
        let c = NoiseGrid::generate(12, 16, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn coarsening_is_pairwise_aggregation() {
        let fine = NoiseGrid::generate(21, 4, 8);
        let coarse = fine.coarsen().unwrap();
        assert_eq!(coarse.steps(), 4);
        for i in 0..4 {
            for m in 0..4 {
                let want = (fine.z(i, 2 * m) + fine.z(i, 2 * m + 1)) * std::f64::consts::FRAC_1_SQRT_2;
                assert_eq!(coarse.z(i, m), want);
            }
        }
        // Twice-coarsened from 8 equals coarsening the 4-step grid.
        let twice = coarse.coarsen().unwrap();
        assert_eq!(twice.steps(), 2);
        assert!(matches!(twice.coarsen().unwrap().coarsen(), Err(SchemeError::OddSteps(1))));
    }

    #[test]
    fn step_constraint_is_enforced_with_override() {
        let model = gbm(0.05, 1.0); // bound = 10
        let mut cfg = config(4, 1, 0); // h = 1
        cfg.horizon_t = 12.0; // h = 12 >= 10
        let initial = EmpiricalMeasure::dirac(1.0, 4).unwrap();
        let noise = NoiseGrid::generate(0, 4, 1);
        assert!(matches!(
            simulate(&model, &initial, &cfg, &noise),
            Err(SchemeError::StepConstraint { .. })
        ));
        cfg.allow_large_h = true;
        assert!(simulate(&model, &initial, &cfg, &noise).is_ok());
    }

    #[test]
    fn shape_and_size_mismatches_are_errors() {
        let cfg = config(4, 2, 0);
        let initial = EmpiricalMeasure::dirac(1.0, 3).unwrap();
        let noise = NoiseGrid::generate(0, 4, 2);
        assert!(matches!(
            simulate(&zero_model(), &initial, &cfg, &noise),
            Err(SchemeError::InitialSize { .. })
        ));
        let initial = EmpiricalMeasure::dirac(1.0, 4).unwrap();
        let bad_noise = NoiseGrid::generate(0, 4, 3);
        assert!(matches!(
            simulate(&zero_model(), &initial, &cfg, &bad_noise),
            Err(SchemeError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn blowup_reports_context() {
        let model = CoefficientSet::from_fns(
            "explode",
            Arc::new(|_, x: f64, _: &EmpiricalMeasure| (x * x).exp()),
            Arc::new(|_, _, _: &EmpiricalMeasure| 0.0),
            0.0,
            0.0,
        )
        .unwrap();
        let cfg = config(2, 8, 1);
        let initial = EmpiricalMeasure::new(vec![40.0, 40.0]).unwrap();
        let noise = NoiseGrid::generate(1, 2, 8);
        match simulate(&model, &initial, &cfg, &noise) {
            Err(SchemeError::Blowup { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn identical_pair_is_bit_identical() {
        let pair = ModelPair::new(gbm(0.05, 1.0), gbm(0.05, 1.0), Relation::AssumptionII);
        let cfg = config(64, 16, 5);
        let initial = EmpiricalMeasure::dirac(1.0, 64).unwrap();
        let (lo, up) = simulate_coupled(&pair, &initial, &initial, &cfg).unwrap();
        for m in 0..=16 {
            assert_eq!(lo.column(m), up.column(m));
        }
    }

    #[test]
    fn ordered_gbm_pair_dominates_pathwise_and_in_order() {
        let pair = ModelPair::new(gbm(0.05, 1.0), gbm(0.15, 1.0), Relation::AssumptionII);
        let cfg = config(512, 32, 9);
        let initial = EmpiricalMeasure::dirac(1.0, 512).unwrap();
        let (lo, up) = simulate_coupled(&pair, &initial, &initial, &cfg).unwrap();
        for m in 0..=32 {
            for i in 0..512 {
                assert!(lo.value(i, m) <= up.value(i, m), "violated at ({i},{m})");
            }
        }
        // Pathwise domination implies stop-loss dominance at tolerance zero.
        for m in 0..=32 {
            let grid = default_strike_grid(lo.marginal(m), up.marginal(m));
            let verdict = check_mcv(lo.marginal(m), up.marginal(m), &grid, 0.0).unwrap();
            assert!(verdict.dominated, "step {m}: {verdict:?}");
        }
    }

    #[test]
    fn coincidence_certain_with_huge_threshold() {
        let cfg = config(2, 4, 3); // h = 0.25, threshold = 1/(2*0.5*0.01) = 100 for lip 0.01
        let (emp, bound) = coincidence_probability(&cfg, 0.01, 2000);
        assert_eq!(emp, 1.0);
        assert!(bound <= 1.0);
    }

    #[test]
    fn gbm_terminal_mean_matches_closed_form() {
        let cfg = config(20_000, 50, 99);
        let initial = EmpiricalMeasure::dirac(1.0, 20_000).unwrap();
        let noise = NoiseGrid::generate(cfg.master_seed, 20_000, 50);
        let ens = simulate(&gbm(0.05, 1.0), &initial, &cfg, &noise).unwrap();
        let (mean, se) = crate::numeric::mean_and_stderr(ens.column(50));
        let target = (0.05f64).exp();
        assert!(
            (mean - target).abs() <= 3.0 * se,
            "mean {mean} target {target} se {se}"
        );
    }
}
