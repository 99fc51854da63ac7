//! Piecewise-affine path reconstruction, path functionals and Monte Carlo
//! estimates with confidence intervals.

use rayon::prelude::*;

use crate::expr::Expr;
use crate::measures::{mixture, MeasureError, MeasureStats, MixtureMeasure};
use crate::numeric::{fmt_sig17, mean_and_stderr};
use crate::rng::keyed_uniform;
use crate::scheme::ParticleEnsemble;

#[derive(Debug, thiserror::Error)]
pub enum PathError {
    #[error("query time {t} outside [0, {horizon}]")]
    QueryOutOfRange { t: f64, horizon: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Piecewise-affine interpolation of grid values on the uniform grid
/// `t_m = m T / M`: on `[t_m, t_{m+1}]` the value is
/// `(M/T) [(t_{m+1} - t) x_m + (t - t_m) x_{m+1}]`.
/// Grid times reproduce grid values exactly.
pub fn interpolate(values: &[f64], t: f64, horizon: f64) -> Result<f64, PathError> {
    assert!(values.len() >= 2, "need at least two grid values");
    if !(0.0..=horizon).contains(&t) {
        return Err(PathError::QueryOutOfRange { t, horizon });
    }
    let m_steps = values.len() - 1;
    let h = horizon / m_steps as f64;
    let ratio = t / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 && (0.0..=m_steps as f64).contains(&nearest) {
        return Ok(values[nearest as usize]);
    }
    let m = (ratio.floor() as usize).min(m_steps - 1);
    let t_m = m as f64 * h;
    let t_next = (m + 1) as f64 * h;
    Ok(((t_next - t) * values[m] + (t - t_m) * values[m + 1]) / h)
}

/// A view of one particle path on the uniform grid.
pub struct GridPath<'a> {
    values: &'a [f64],
    horizon: f64,
}

impl<'a> GridPath<'a> {
    pub fn new(values: &'a [f64], horizon: f64) -> Self {
        assert!(values.len() >= 2);
        Self { values, horizon }
    }

    pub fn at(&self, t: f64) -> Result<f64, PathError> {
        interpolate(self.values, t, self.horizon)
    }

    /// Sup of the interpolated path; attained at a knot since the path is
    /// piecewise affine.
    pub fn sup(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v))
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Path functionals the estimator knows how to evaluate.
#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// `max(path(t), 0)^2` at the query time.
    TerminalCallSquare,
    /// Sup of the path over the whole horizon (query time ignored).
    SupPath,
    /// Path value at the horizon (query time ignored).
    TerminalValue,
    /// Expression over the interpolated path value `x`, the query time `t`
    /// and mean-field statistics of the marginal at the query time.
    UserComposite(Expr),
}

#[derive(Debug, Clone)]
pub struct FunctionalSpec {
    pub kind: FunctionalKind,
    /// Caller-declared: the functional is non-decreasing and convex in the
    /// path. Not verifiable in general; `spot_check_composite` probes it.
    pub monotone_convex_declared: bool,
}

impl FunctionalSpec {
    pub fn new(kind: FunctionalKind) -> Self {
        Self {
            kind,
            monotone_convex_declared: true,
        }
    }

    fn eval(&self, path: &GridPath<'_>, t_query: f64, stats: &dyn MeasureStats) -> Result<f64, PathError> {
        Ok(match &self.kind {
            FunctionalKind::TerminalCallSquare => {
                let v = path.at(t_query)?.max(0.0);
                v * v
            }
            FunctionalKind::SupPath => path.sup(),
            FunctionalKind::TerminalValue => path.terminal(),
            FunctionalKind::UserComposite(expr) => expr.eval(path.at(t_query)?, t_query, stats),
        })
    }
}

/// Monte Carlo estimate with its 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

impl Estimate {
    pub fn from_samples_stats(mean: f64, stderr: f64, n: usize) -> Self {
        Self {
            value: mean,
            stderr,
            n,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let (mean, stderr) = mean_and_stderr(values);
        Self::from_samples_stats(mean, stderr, values.len())
    }
}

/// Marginal law at an arbitrary time: a grid marginal, or the mixture
/// interpolation of the two bracketing marginals for off-grid queries.
enum MarginalAt<'a> {
    Grid(&'a crate::measures::EmpiricalMeasure),
    Between(MixtureMeasure),
}

impl MeasureStats for MarginalAt<'_> {
    fn mean_field(&self, stat: crate::measures::MeanField) -> f64 {
        match self {
            MarginalAt::Grid(m) => m.mean_field(stat),
            MarginalAt::Between(m) => m.mean_field(stat),
        }
    }
}

fn marginal_at(ens: &ParticleEnsemble, t: f64) -> Result<MarginalAt<'_>, PathError> {
    let horizon = ens.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(PathError::QueryOutOfRange { t, horizon });
    }
    let steps = ens.steps();
    let h = horizon / steps as f64;
    let ratio = t / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 && (0.0..=steps as f64).contains(&nearest) {
        return Ok(MarginalAt::Grid(ens.marginal(nearest as usize)));
    }
    let m = (ratio.floor() as usize).min(steps - 1);
    // Weight on the left marginal mirrors the path interpolator.
    let lambda = ((m + 1) as f64 * h - t) / h;
    let mix = mixture(ens.marginal(m), ens.marginal(m + 1), lambda)?;
    Ok(MarginalAt::Between(mix))
}

/// Per-particle functional values at a query time.
pub fn functional_values(
    ens: &ParticleEnsemble,
    spec: &FunctionalSpec,
    t_query: f64,
) -> Result<Vec<f64>, PathError> {
    let stats = marginal_at(ens, t_query)?;
    let horizon = ens.horizon();
    let n = ens.particles();
    let values: Result<Vec<f64>, PathError> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            ens.gather_path(i, buf);
            let path = GridPath::new(buf, horizon);
            spec.eval(&path, t_query, &stats)
        })
        .collect();
    values
}

/// Mean and confidence interval of a functional over the ensemble.
pub fn estimate_functional(
    ens: &ParticleEnsemble,
    spec: &FunctionalSpec,
    t_query: f64,
) -> Result<Estimate, PathError> {
    Ok(Estimate::from_values(&functional_values(ens, spec, t_query)?))
}

/// Per-particle functional values at grid step `m`. Column access, no path
/// reconstruction; equals `functional_values` at `t = m T / M`.
pub fn functional_values_at_step(
    ens: &ParticleEnsemble,
    spec: &FunctionalSpec,
    step: usize,
) -> Result<Vec<f64>, PathError> {
    assert!(step <= ens.steps());
    Ok(match &spec.kind {
        FunctionalKind::TerminalCallSquare => ens
            .column(step)
            .iter()
            .map(|&v| {
                let c = v.max(0.0);
                c * c
            })
            .collect(),
        FunctionalKind::TerminalValue => ens.column(ens.steps()).to_vec(),
        FunctionalKind::SupPath => {
            let mut sup = ens.column(0).to_vec();
            for m in 1..=ens.steps() {
                for (s, &v) in sup.iter_mut().zip(ens.column(m)) {
                    if v > *s {
                        *s = v;
                    }
                }
            }
            sup
        }
        FunctionalKind::UserComposite(expr) => {
            let t = step as f64 * ens.config.step_h();
            let stats = ens.marginal(step);
            ens.column(step)
                .par_iter()
                .map(|&x| expr.eval(x, t, stats))
                .collect()
        }
    })
}

/// `E[max(X_t, 0)^2] = x0^2 exp((2r + v^2) t)` for geometric Brownian motion
/// started at x0 > 0 (the process stays positive, so the call part is free).
pub fn gbm_call_square_closed_form(r: f64, v: f64, x0: f64, t: f64) -> f64 {
    debug_assert!(x0 > 0.0);
    x0 * x0 * ((2.0 * r + v * v) * t).exp()
}

/// Randomized spot-check of the declared monotone-convexity of a composite:
/// midpoint convexity and positive-bump monotonicity on sampled path pairs.
/// Findings are warnings, not errors.
pub fn spot_check_composite(
    ens: &ParticleEnsemble,
    spec: &FunctionalSpec,
    t_query: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<String>, PathError> {
    let stats = marginal_at(ens, t_query)?;
    let horizon = ens.horizon();
    let n = ens.particles();
    let mut warnings = Vec::new();
    let mut a_buf = Vec::new();
    let mut b_buf = Vec::new();
    let mut mid_buf = Vec::new();
    for trial in 0..trials as u64 {
        let i = (keyed_uniform(seed, 20, trial, 0) * n as f64) as usize % n;
        let j = (keyed_uniform(seed, 20, trial, 1) * n as f64) as usize % n;
        ens.gather_path(i, &mut a_buf);
        ens.gather_path(j, &mut b_buf);
        mid_buf.clear();
        mid_buf.extend(a_buf.iter().zip(&b_buf).map(|(a, b)| 0.5 * (a + b)));
        let fa = spec.eval(&GridPath::new(&a_buf, horizon), t_query, &stats)?;
        let fb = spec.eval(&GridPath::new(&b_buf, horizon), t_query, &stats)?;
        let fm = spec.eval(&GridPath::new(&mid_buf, horizon), t_query, &stats)?;
        let tol = 1e-9 * (1.0 + fa.abs().max(fb.abs()));
        if fm > 0.5 * (fa + fb) + tol {
            warnings.push(format!(
                "midpoint convexity violated on particles ({i},{j}) at t={t_query}: \
                 f(mid)={fm} > {}",
                0.5 * (fa + fb)
            ));
        }
        let bump = 0.5 + keyed_uniform(seed, 20, trial, 2);
        mid_buf.clear();
        mid_buf.extend(a_buf.iter().map(|a| a + bump));
        let f_up = spec.eval(&GridPath::new(&mid_buf, horizon), t_query, &stats)?;
        if f_up < fa - tol {
            warnings.push(format!(
                "monotonicity violated on particle {i} at t={t_query}: \
                 f(path+{bump})={f_up} < f(path)={fa}"
            ));
        }
    }
    Ok(warnings)
}

/// CSV for an estimate curve: header `t,estimate,stderr,ci_lo,ci_hi`.
pub fn curve_csv(points: &[(f64, Estimate)]) -> String {
    let mut out = String::from("t,estimate,stderr,ci_lo,ci_hi\n");
    for (t, e) in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig17(*t),
            fmt_sig17(e.value),
            fmt_sig17(e.stderr),
            fmt_sig17(e.ci95.0),
            fmt_sig17(e.ci95.1)
        ));
    }
    out
}
