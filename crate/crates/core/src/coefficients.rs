//! Drift/diffusion coefficient sets with declared regularity metadata, the
//! built-in benchmark models, and randomized probing of the structural
//! assumptions (convexity in x, monotone response to mcv-ordered measures,
//! coefficient dominance) that order certification relies on.

use std::sync::Arc;

use crate::expr::{Expr, ExprError};
use crate::measures::{EmpiricalMeasure, MeanField, MeasureStats};
use crate::rng::{keyed_normal, keyed_uniform};

pub type CoeffFn = Arc<dyn Fn(f64, f64, &EmpiricalMeasure) -> f64 + Send + Sync>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CoefficientError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("bad model arguments in `{0}`: expected gbm(<drift_rate>, <vol>)")]
    BadModelArgs(String),
    #[error("coefficient expression: {0}")]
    Expr(#[from] ExprError),
    #[error("Lipschitz constant {name} must be finite and >= 0, got {value}")]
    BadConstant { name: &'static str, value: f64 },
}

/// One side of a McKean-Vlasov equation: drift and diffusion functions of
/// (t, x, mu) plus declared regularity constants. The constants are inputs,
/// validated by probing, never inferred: the truncation threshold and the
/// step-size constraint must be deterministic and config-stable.
#[derive(Clone)]
pub struct CoefficientSet {
    pub label: String,
    drift: CoeffFn,
    diffusion: CoeffFn,
    pub lip_x_drift: f64,
    pub lip_x_diffusion: f64,
    pub lip_measure: f64,
    pub holder_t: f64,
    /// Interval the coefficient probes draw states from. Multiplicative
    /// models whose paths stay positive declare [0, R]; additive models use
    /// the symmetric default.
    pub probe_domain: (f64, f64),
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("label", &self.label)
            .field("lip_x_drift", &self.lip_x_drift)
            .field("lip_x_diffusion", &self.lip_x_diffusion)
            .field("lip_measure", &self.lip_measure)
            .field("holder_t", &self.holder_t)
            .field("probe_domain", &self.probe_domain)
            .finish()
    }
}

pub const DEFAULT_PROBE_RADIUS: f64 = 10.0;

impl CoefficientSet {
    pub fn from_fns(
        label: impl Into<String>,
        drift: CoeffFn,
        diffusion: CoeffFn,
        lip_x_drift: f64,
        lip_x_diffusion: f64,
    ) -> Result<Self, CoefficientError> {
        for (name, value) in [("lip_x_drift", lip_x_drift), ("lip_x_diffusion", lip_x_diffusion)] {
            if !value.is_finite() || value < 0.0 {
                return Err(CoefficientError::BadConstant { name, value });
            }
        }
        Ok(Self {
            label: label.into(),
            drift,
            diffusion,
            lip_x_drift,
            lip_x_diffusion,
            lip_measure: 0.0,
            holder_t: 1.0,
            probe_domain: (-DEFAULT_PROBE_RADIUS, DEFAULT_PROBE_RADIUS),
        })
    }

    /// Compiles drift/diffusion expressions into a coefficient set.
    pub fn from_exprs(
        label: impl Into<String>,
        drift_src: &str,
        diffusion_src: &str,
        lip_x_drift: f64,
        lip_x_diffusion: f64,
    ) -> Result<Self, CoefficientError> {
        let drift = Expr::parse(drift_src)?;
        let diffusion = Expr::parse(diffusion_src)?;
        Self::from_fns(
            label,
            Arc::new(move |t, x, mu: &EmpiricalMeasure| drift.eval(x, t, mu)),
            Arc::new(move |t, x, mu: &EmpiricalMeasure| diffusion.eval(x, t, mu)),
            lip_x_drift,
            lip_x_diffusion,
        )
    }

    pub fn with_lip_measure(mut self, lip_measure: f64) -> Self {
        self.lip_measure = lip_measure;
        self
    }

    pub fn with_holder_t(mut self, holder_t: f64) -> Self {
        self.holder_t = holder_t;
        self
    }

    pub fn with_probe_domain(mut self, lo: f64, hi: f64) -> Self {
        assert!(lo < hi);
        self.probe_domain = (lo, hi);
        self
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64, mu: &EmpiricalMeasure) -> f64 {
        (self.drift)(t, x, mu)
    }

    #[inline]
    pub fn diffusion(&self, t: f64, x: f64, mu: &EmpiricalMeasure) -> f64 {
        (self.diffusion)(t, x, mu)
    }
}

/// Geometric Brownian motion `dX = r X dt + v X dB`.
pub fn gbm(drift_rate: f64, vol: f64) -> CoefficientSet {
    let r = drift_rate;
    let v = vol;
    CoefficientSet::from_fns(
        format!("gbm({drift_rate},{vol})"),
        Arc::new(move |_t, x, _mu: &EmpiricalMeasure| r * x),
        Arc::new(move |_t, x, _mu: &EmpiricalMeasure| v * x),
        drift_rate.abs(),
        vol.abs(),
    )
    .expect("finite constants")
    .with_probe_domain(0.0, DEFAULT_PROBE_RADIUS)
}

fn example1_y() -> CoefficientSet {
    CoefficientSet::from_fns(
        "example1_y".to_string(),
        Arc::new(|_t, x, mu: &EmpiricalMeasure| 0.05 * x * (mu.mean_field(MeanField::Sin2) + 2.0)),
        Arc::new(|_t, x, _mu: &EmpiricalMeasure| x),
        0.15,
        1.0,
    )
    .expect("finite constants")
    .with_lip_measure(0.5)
    .with_probe_domain(0.0, DEFAULT_PROBE_RADIUS)
}

fn example2_y() -> CoefficientSet {
    CoefficientSet::from_fns(
        "example2_y".to_string(),
        Arc::new(|_t, x, mu: &EmpiricalMeasure| {
            0.05 * ((x.cosh() * (1.5 + mu.mean_field(MeanField::Sin))).ln() + 2.0)
        }),
        Arc::new(|_t, x, mu: &EmpiricalMeasure| {
            0.3 * ((x.cosh() * (1.5 + mu.mean_field(MeanField::Cos))).ln() + 2.0)
        }),
        0.05,
        0.3,
    )
    .expect("finite constants")
    .with_lip_measure(0.6)
}

fn example2_const(label: &str, c: f64) -> CoefficientSet {
    CoefficientSet::from_fns(
        label.to_string(),
        Arc::new(move |_t, x, _mu: &EmpiricalMeasure| 0.05 * (x.cosh().ln() + c)),
        Arc::new(move |_t, x, _mu: &EmpiricalMeasure| 0.3 * (x.cosh().ln() + c)),
        0.05,
        0.3,
    )
    .expect("finite constants")
}

/// Resolves a built-in model identifier: `gbm(<rate>, <vol>)`, `example1_y`,
/// `example2_y`, `example2_down`, `example2_up`.
pub fn builtin_model(name: &str) -> Result<CoefficientSet, CoefficientError> {
    let trimmed = name.trim();
    if let Some(rest) = trimmed.strip_prefix("gbm(") {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| CoefficientError::BadModelArgs(trimmed.to_string()))?;
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 2 {
            return Err(CoefficientError::BadModelArgs(trimmed.to_string()));
        }
        let r: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| CoefficientError::BadModelArgs(trimmed.to_string()))?;
        let v: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| CoefficientError::BadModelArgs(trimmed.to_string()))?;
        return Ok(gbm(r, v));
    }
    match trimmed {
        "example1_y" => Ok(example1_y()),
        "example2_y" => Ok(example2_y()),
        "example2_down" => Ok(example2_const("example2_down", 1.306)),
        "example2_up" => Ok(example2_const("example2_up", 2.917)),
        other => Err(CoefficientError::UnknownModel(other.to_string())),
    }
}

/// Which assumption route certifies `lower mcv-below upper`. The structural
/// constraints (convexity in x, monotone measure response) fall on the lower
/// model under the direct route and on the upper model under the symmetric
/// route; coefficient dominance is `lower <= upper` in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AssumptionII,
    AssumptionIIPrime,
}

impl std::str::FromStr for Relation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "assumption_II" => Ok(Relation::AssumptionII),
            "assumption_II_prime" => Ok(Relation::AssumptionIIPrime),
            other => Err(format!(
                "unknown relation `{other}` (expected assumption_II or assumption_II_prime)"
            )),
        }
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Relation::AssumptionII => write!(f, "assumption_II"),
            Relation::AssumptionIIPrime => write!(f, "assumption_II_prime"),
        }
    }
}

/// A coupled pair of models with the claimed order relation between them.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub lower: CoefficientSet,
    pub upper: CoefficientSet,
    pub claimed_relation: Relation,
}

impl ModelPair {
    pub fn new(lower: CoefficientSet, upper: CoefficientSet, claimed_relation: Relation) -> Self {
        Self {
            lower,
            upper,
            claimed_relation,
        }
    }

    /// The model carrying the structural constraints for the claimed route.
    pub fn constrained(&self) -> &CoefficientSet {
        match self.claimed_relation {
            Relation::AssumptionII => &self.lower,
            Relation::AssumptionIIPrime => &self.upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeCheck {
    DriftConvexity,
    DiffusionConvexity,
    DriftMeasureMonotone,
    DiffusionMeasureMonotone,
    DriftDominance,
    DiffusionDominance,
}

impl std::fmt::Display for ProbeCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProbeCheck::DriftConvexity => "drift_convexity",
            ProbeCheck::DiffusionConvexity => "diffusion_convexity",
            ProbeCheck::DriftMeasureMonotone => "drift_measure_monotone",
            ProbeCheck::DiffusionMeasureMonotone => "diffusion_measure_monotone",
            ProbeCheck::DriftDominance => "drift_dominance",
            ProbeCheck::DiffusionDominance => "diffusion_dominance",
        };
        f.write_str(s)
    }
}

/// One failed probe with the inputs that produced it.
#[derive(Debug, Clone)]
pub struct ProbeViolation {
    pub check: ProbeCheck,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub lambda: f64,
    pub shift: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ProbeReport {
    pub probes: usize,
    pub violations: Vec<ProbeViolation>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,t,x,y,lambda,shift,lhs,rhs\n");
        for v in &self.violations {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                v.check, v.t, v.x, v.y, v.lambda, v.shift, v.lhs, v.rhs
            ));
        }
        out
    }
}

/// Probe distribution parameters. States are uniform on the models' probe
/// domains, times uniform on [0, horizon], measures are 64-atom Gaussians.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    pub seed: u64,
    pub horizon: f64,
    pub measure_atoms: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed_caf3,
            horizon: 1.0,
            measure_atoms: 64,
        }
    }
}

const PROBE_TOL: f64 = 1e-9;

fn tol_for(values: &[f64]) -> f64 {
    PROBE_TOL * (1.0 + values.iter().fold(0.0f64, |a, v| a.max(v.abs())))
}

/// Randomized validation of the claimed assumption: convexity of drift and
/// |diffusion| in x and monotone measure response on the constrained model,
/// plus coefficient dominance `lower <= upper`, `|sigma_lower| <= |sigma_upper|`.
/// A failed probe is a report entry, never an error.
pub fn validate_assumption_ii(pair: &ModelPair, probe_count: usize) -> ProbeReport {
    validate_assumption_ii_with(pair, probe_count, &ProbeConfig::default())
}

pub fn validate_assumption_ii_with(
    pair: &ModelPair,
    probe_count: usize,
    cfg: &ProbeConfig,
) -> ProbeReport {
    debug_assert!(probe_count >= 100, "probe_count below the sampling floor");
    let constrained = pair.constrained();
    let (dom_lo, dom_hi) = (
        pair.lower.probe_domain.0.max(pair.upper.probe_domain.0),
        pair.lower.probe_domain.1.min(pair.upper.probe_domain.1),
    );
    assert!(dom_lo < dom_hi, "probe domains do not overlap");

    let mut report = ProbeReport {
        probes: probe_count,
        violations: Vec::new(),
    };

    for i in 0..probe_count as u64 {
        let u = |slot: u64| keyed_uniform(cfg.seed, 1, i, slot);
        let t = u(0) * cfg.horizon;
        let x = dom_lo + (dom_hi - dom_lo) * u(1);
        let y = dom_lo + (dom_hi - dom_lo) * u(2);
        let lambda = u(3);
        let mean = -2.0 + 4.0 * u(4);
        let sd = 0.5 + 1.5 * u(5);
        let shift = 2.0 * u(6);

        let atoms: Vec<f64> = (0..cfg.measure_atoms as u64)
            .map(|j| mean + sd * keyed_normal(cfg.seed, 2 + i, j))
            .collect();
        let mu = EmpiricalMeasure::new(atoms.clone()).expect("finite atoms");
        let nu = EmpiricalMeasure::new(atoms.iter().map(|a| a + shift).collect())
            .expect("finite atoms");

        let mid = lambda * x + (1.0 - lambda) * y;

        // Convexity of drift and |diffusion| in x on the constrained model.
        {
            let fx = constrained.drift(t, x, &mu);
            let fy = constrained.drift(t, y, &mu);
            let fm = constrained.drift(t, mid, &mu);
            let bound = lambda * fx + (1.0 - lambda) * fy;
            if fm > bound + tol_for(&[fx, fy, fm]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DriftConvexity,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: fm,
                    rhs: bound,
                });
            }
            let gx = constrained.diffusion(t, x, &mu).abs();
            let gy = constrained.diffusion(t, y, &mu).abs();
            let gm = constrained.diffusion(t, mid, &mu).abs();
            let gbound = lambda * gx + (1.0 - lambda) * gy;
            if gm > gbound + tol_for(&[gx, gy, gm]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DiffusionConvexity,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: gm,
                    rhs: gbound,
                });
            }
        }

        // Monotone response to mcv-ordered measures (nu is mu shifted up,
        // hence dominates it pathwise and so in the monotone convex order).
        {
            let lo = constrained.drift(t, x, &mu);
            let hi = constrained.drift(t, x, &nu);
            if lo > hi + tol_for(&[lo, hi]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DriftMeasureMonotone,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: lo,
                    rhs: hi,
                });
            }
            let slo = constrained.diffusion(t, x, &mu).abs();
            let shi = constrained.diffusion(t, x, &nu).abs();
            if slo > shi + tol_for(&[slo, shi]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DiffusionMeasureMonotone,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: slo,
                    rhs: shi,
                });
            }
        }

        // Coefficient dominance between the two models.
        {
            let bl = pair.lower.drift(t, x, &mu);
            let bu = pair.upper.drift(t, x, &mu);
            if bl > bu + tol_for(&[bl, bu]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DriftDominance,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: bl,
                    rhs: bu,
                });
            }
            let sl = pair.lower.diffusion(t, x, &mu).abs();
            let su = pair.upper.diffusion(t, x, &mu).abs();
            if sl > su + tol_for(&[sl, su]) {
                report.violations.push(ProbeViolation {
                    check: ProbeCheck::DiffusionDominance,
                    t,
                    x,
                    y,
                    lambda,
                    shift,
                    lhs: sl,
                    rhs: su,
                });
            }
        }
    }
    report
}

/// Largest observed difference quotient |f(x)-f(y)| / |x-y| over random
/// probe pairs, for checking declared Lipschitz constants.
pub fn probed_lipschitz_x<F: Fn(f64, f64, &EmpiricalMeasure) -> f64>(
    f: F,
    domain: (f64, f64),
    probe_count: usize,
    cfg: &ProbeConfig,
) -> f64 {
    let (lo, hi) = domain;
    let mut worst = 0.0f64;
    for i in 0..probe_count as u64 {
        let t = keyed_uniform(cfg.seed, 3, i, 0) * cfg.horizon;
        let x = lo + (hi - lo) * keyed_uniform(cfg.seed, 3, i, 1);
        let y = lo + (hi - lo) * keyed_uniform(cfg.seed, 3, i, 2);
        if (x - y).abs() < 1e-9 {
            continue;
        }
        let mean = -2.0 + 4.0 * keyed_uniform(cfg.seed, 3, i, 3);
        let atoms: Vec<f64> = (0..cfg.measure_atoms as u64)
            .map(|j| mean + keyed_normal(cfg.seed, 4 + i, j))
            .collect();
        let mu = EmpiricalMeasure::new(atoms).expect("finite atoms");
        let q = (f(t, x, &mu) - f(t, y, &mu)).abs() / (x - y).abs();
        worst = worst.max(q);
    }
    worst
}
