//! Quadrature and brute-force verification independent of the Monte Carlo
//! engine: expectations of functions of truncated Gaussians, monotonicity
//! propagation of one-step Euler transitions, the closed-form derivative of
//! the exponential transition for the decreasing-diffusion counterexample,
//! and an exhaustive finite-support cross-check of stop-loss order testing.

use std::sync::Arc;

use rayon::prelude::*;

use crate::rng::keyed_uniform;
use crate::scheme::truncation_threshold;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("quadrature self-check failed: {0}")]
    SelfCheck(String),
}

const SQRT_TAU: f64 = 2.5066282746310002; // sqrt(2 pi)

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_TAU
}

/// Phi(x), via the complementary error function so that tails keep full
/// relative accuracy out to |x| ~ 20.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Survival function 1 - Phi(x).
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    assert!(order >= 2);
    let mut out = Vec::with_capacity(order);
    let n = order as f64;
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and its derivative.
            let mut p0 = 1.0f64;
            let mut p1 = x;
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0f64;
        let mut p1 = x;
        for k in 2..=order {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n * (x * p1 - p0) / (x * x - 1.0);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Composite Gauss-Legendre rule for expectations against the standard
/// normal density. The base domain is [-8, 8] (the omitted tail mass is
/// ~1e-15); windows can be widened per call when an integrand carries its
/// mass elsewhere.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    unit_nodes: Vec<(f64, f64)>,
    panel_width: f64,
}

pub const BASE_DOMAIN: (f64, f64) = (-8.0, 8.0);

impl QuadratureRule {
    /// `panels` composite panels of order 16 over the base domain.
    /// Construction runs the normalization self-check.
    pub fn with_panels(panels: usize) -> Result<Self, OracleError> {
        assert!(panels >= 1);
        let rule = Self {
            unit_nodes: gauss_legendre(16),
            panel_width: (BASE_DOMAIN.1 - BASE_DOMAIN.0) / panels as f64,
        };
        let mass = rule.normal_expectation(|_| 1.0);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(OracleError::SelfCheck(format!(
                "total mass {mass} deviates from 1 by {}",
                (mass - 1.0).abs()
            )));
        }
        let mean = rule.normal_expectation(|z| z);
        if mean.abs() > 1e-10 {
            return Err(OracleError::SelfCheck(format!("first moment {mean} not 0")));
        }
        let second = rule.normal_expectation(|z| z * z);
        if (second - 1.0).abs() > 1e-10 {
            return Err(OracleError::SelfCheck(format!("second moment {second} not 1")));
        }
        Ok(rule)
    }

    pub fn standard() -> Self {
        Self::with_panels(64).expect("standard rule passes self-check")
    }

    /// Integral of f(z) phi(z) dz over [lo, hi].
    pub fn normal_expectation_window<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> f64 {
        assert!(lo < hi);
        let panels = ((hi - lo) / self.panel_width).ceil().max(1.0) as usize;
        let width = (hi - lo) / panels as f64;
        let mut total = 0.0f64;
        let mut comp = 0.0f64;
        for p in 0..panels {
            let a = lo + p as f64 * width;
            let half = 0.5 * width;
            let mid = a + half;
            for &(node, weight) in &self.unit_nodes {
                let z = mid + half * node;
                let term = weight * half * f(z) * normal_pdf(z);
                let t = total + term;
                comp += if total.abs() >= term.abs() {
                    (total - t) + term
                } else {
                    (term - t) + total
                };
                total = t;
            }
        }
        total + comp
    }

    /// Integral of f(z) phi(z) dz over the base domain.
    pub fn normal_expectation<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.normal_expectation_window(f, BASE_DOMAIN.0, BASE_DOMAIN.1)
    }

    /// Integral over [lo, hi] split at the interior `cuts` (points where the
    /// integrand is not smooth). Cuts outside the window are ignored.
    pub fn normal_expectation_split<F: Fn(f64) -> f64>(
        &self,
        f: F,
        lo: f64,
        hi: f64,
        cuts: &[f64],
    ) -> f64 {
        let mut edges: Vec<f64> = cuts.iter().copied().filter(|c| *c > lo && *c < hi).collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        edges.dedup();
        let mut total = 0.0;
        let mut left = lo;
        for cut in edges {
            total += self.normal_expectation_window(&f, left, cut);
            left = cut;
        }
        total + self.normal_expectation_window(&f, left, hi)
    }
}

/// E f(u * T^h(Z)) for standard normal Z: the integral over the untruncated
/// region plus f(0) times the truncated tail mass.
pub fn expect_f_of_truncated<F: Fn(f64) -> f64>(
    rule: &QuadratureRule,
    u: f64,
    h: f64,
    lip: f64,
    f: F,
) -> f64 {
    let c = truncation_threshold(h, lip);
    let edge = c.min(BASE_DOMAIN.1);
    let body = rule.normal_expectation_window(|z| f(u * z), -edge, edge);
    let tail_mass = if c.is_finite() { 2.0 * normal_sf(c) } else { 0.0 };
    body + f(0.0) * tail_mass
}

/// Expected excess of a standard normal above x: `sigma(x) = E (Z - x)^+`,
/// with the stable closed form `phi(x) - x (1 - Phi(x))`. Convex, positive
/// and strictly decreasing; its derivative is `-(1 - Phi(x))`.
pub fn expected_excess(x: f64) -> f64 {
    normal_pdf(x) - x * normal_sf(x)
}

pub fn expected_excess_derivative(x: f64) -> f64 {
    -normal_sf(x)
}

/// Closed-form derivative in x of the one-step exponential transition
/// `x -> E exp(x + sqrt(h) sigma(x) Z)` with `sigma = expected_excess`:
/// `exp(x + h sigma^2(x)/2) * (1 + h sigma(x) sigma'(x))`.
///
/// Since `sigma sigma'(x) ~ x` as `x -> -infinity`, the factor turns
/// negative for x below roughly -1/h: the transition loses monotonicity,
/// which is the counterexample to monotonicity propagation for a
/// decreasing diffusion under the regular (untruncated) scheme.
pub fn counterexample_derivative(x: f64, h: f64) -> f64 {
    debug_assert!(h > 0.0);
    let s = expected_excess(x);
    (x + 0.5 * h * s * s).exp() * (1.0 + h * s * expected_excess_derivative(x))
}

/// The transition itself, by quadrature over a window that always covers
/// both the central normal mass and the exponentially tilted mass at
/// `z ~ sqrt(h) sigma(x)`.
pub fn counterexample_transition(rule: &QuadratureRule, x: f64, h: f64) -> f64 {
    let a = h.sqrt() * expected_excess(x);
    let lo = BASE_DOMAIN.0.min(a - 8.0);
    let hi = BASE_DOMAIN.1.max(a + 8.0);
    rule.normal_expectation_window(|z| (x + a * z).exp(), lo, hi)
}

/// A fixed catalog of non-decreasing convex test functions: calls at 11
/// strikes, exponentials and softplus at 3 scales each. `kinks` lists the
/// points where f is not smooth, so quadrature windows can be split there
/// and keep full accuracy.
pub struct CatalogFn {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub kinks: Vec<f64>,
}

pub fn convex_catalog() -> Vec<CatalogFn> {
    let mut out = Vec::new();
    for i in 0..11 {
        let k = -5.0 + i as f64;
        out.push(CatalogFn {
            name: format!("call({k})"),
            f: Arc::new(move |x: f64| (x - k).max(0.0)),
            kinks: vec![k],
        });
    }
    for s in [0.25, 0.5, 1.0] {
        out.push(CatalogFn {
            name: format!("exp({s})"),
            f: Arc::new(move |x: f64| (s * x).exp()),
            kinks: vec![],
        });
    }
    for s in [0.5, 1.0, 2.0] {
        out.push(CatalogFn {
            name: format!("softplus({s})"),
            f: Arc::new(move |x: f64| s * (((x / s).max(0.0)) + (-(x / s).abs()).exp().ln_1p())),
            kinks: vec![],
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    NonDecreasing,
    DecreasingCounterexample,
}

#[derive(Debug, Clone)]
pub struct PropagationViolation {
    pub sigma: String,
    pub f: String,
    pub kind: &'static str, // "monotonicity" | "convexity"
    pub x: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PropagationReport {
    pub cases: usize,
    pub violations: Vec<PropagationViolation>,
}

impl PropagationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn transition_values(
    rule: &QuadratureRule,
    sigma: &dyn Fn(f64) -> f64,
    cat: &CatalogFn,
    h: f64,
    grid: &[f64],
) -> Vec<f64> {
    let f = cat.f.as_ref();
    grid.iter()
        .map(|&x| {
            let a = h.sqrt() * sigma(x);
            if a == 0.0 {
                return f(x);
            }
            // Window wide enough for both the central normal mass and any
            // exponential tilt; split at images of the kinks of f.
            let lo = BASE_DOMAIN.0.min(a - 8.0).min(-a - 8.0);
            let hi = BASE_DOMAIN.1.max(a + 8.0).max(-a + 8.0);
            let cuts: Vec<f64> = cat.kinks.iter().map(|k| (k - x) / a).collect();
            rule.normal_expectation_split(|z| f(x + a * z), lo, hi, &cuts)
        })
        .collect()
}

const PROPAGATION_TOL: f64 = 1e-9;

/// Checks, for every catalog function, that the one-step transition
/// `x -> E f(x + sqrt(h) sigma(x) Z)` (raw Gaussian, zero drift) is
/// non-decreasing and convex on a grid when |sigma| is non-decreasing, and
/// reports where either fails. The decreasing counterexample sigma must
/// fail; the non-decreasing catalog must not.
pub fn check_monotonicity_propagation(
    sigma_kind: SigmaKind,
    h: f64,
    rule: &QuadratureRule,
) -> PropagationReport {
    type SigmaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
    let sigmas: Vec<(String, SigmaFn)> = match sigma_kind {
        SigmaKind::NonDecreasing => vec![
            ("x_plus_one".to_string(), Arc::new(|x: f64| x.max(0.0) + 1.0) as _),
            ("const_one".to_string(), Arc::new(|_: f64| 1.0) as _),
        ],
        SigmaKind::DecreasingCounterexample => {
            vec![("expected_excess".to_string(), Arc::new(expected_excess) as _)]
        }
    };
    let grid: Vec<f64> = match sigma_kind {
        SigmaKind::NonDecreasing => (0..201).map(|i| -5.0 + 10.0 * i as f64 / 200.0).collect(),
        SigmaKind::DecreasingCounterexample => {
            (0..261).map(|i| -8.0 + 13.0 * i as f64 / 260.0).collect()
        }
    };

    let mut report = PropagationReport::default();
    for (sigma_name, sigma) in &sigmas {
        for cat in convex_catalog() {
            report.cases += 1;
            let values = transition_values(rule, sigma.as_ref(), &cat, h, &grid);
            for j in 0..values.len() - 1 {
                let tol = PROPAGATION_TOL * values[j].abs().max(1.0);
                if values[j + 1] < values[j] - tol {
                    report.violations.push(PropagationViolation {
                        sigma: sigma_name.clone(),
                        f: cat.name.clone(),
                        kind: "monotonicity",
                        x: grid[j],
                        left: values[j],
                        right: values[j + 1],
                    });
                }
            }
            for j in 1..values.len() - 1 {
                let second = values[j + 1] - 2.0 * values[j] + values[j - 1];
                let tol = PROPAGATION_TOL * values[j].abs().max(1.0);
                if second < -tol {
                    report.violations.push(PropagationViolation {
                        sigma: sigma_name.clone(),
                        f: cat.name.clone(),
                        kind: "convexity",
                        x: grid[j],
                        left: second,
                        right: 0.0,
                    });
                }
            }
        }
    }
    report
}

/// Verdicts of the two independent finite-support order tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EquivalenceOutcome {
    pub stop_loss_dominates: bool,
    pub family_dominates: bool,
}

impl EquivalenceOutcome {
    pub fn agree(&self) -> bool {
        self.stop_loss_dominates == self.family_dominates
    }
}

const EQ_TOL: f64 = 1e-12;

/// Compares stop-loss dominance over all integer strikes in the support
/// hull against integral dominance over the exhaustive family of
/// piecewise-linear non-decreasing convex functions with integer knots and
/// slopes in {0..4}. Atoms are integers in [-10, 10], at most 5 per side,
/// equal weights within each side.
pub fn finite_support_mcv_equivalence(mu_atoms: &[i32], nu_atoms: &[i32]) -> EquivalenceOutcome {
    assert!((1..=5).contains(&mu_atoms.len()) && (1..=5).contains(&nu_atoms.len()));
    for &a in mu_atoms.iter().chain(nu_atoms) {
        assert!((-10..=10).contains(&a), "atom {a} outside [-10, 10]");
    }
    let lo = *mu_atoms.iter().chain(nu_atoms).min().unwrap();
    let hi = *mu_atoms.iter().chain(nu_atoms).max().unwrap();

    let stop_loss = |atoms: &[i32], k: i32| -> f64 {
        atoms.iter().map(|&a| (a - k).max(0) as f64).sum::<f64>() / atoms.len() as f64
    };
    let stop_loss_dominates =
        (lo..=hi).all(|k| stop_loss(mu_atoms, k) <= stop_loss(nu_atoms, k) + EQ_TOL);

    // Exhaustive family: values on the integer grid of the hull, built from
    // non-decreasing slope sequences; f(lo) = 0 since constants cancel
    // between two probability measures.
    let width = (hi - lo) as usize;
    let mu_idx: Vec<usize> = mu_atoms.iter().map(|&a| (a - lo) as usize).collect();
    let nu_idx: Vec<usize> = nu_atoms.iter().map(|&a| (a - lo) as usize).collect();
    let mut values = vec![0.0f64; width + 1];
    let mut family_dominates = true;

    fn recurse(
        seg: usize,
        min_slope: i32,
        width: usize,
        values: &mut Vec<f64>,
        mu_idx: &[usize],
        nu_idx: &[usize],
        ok: &mut bool,
    ) {
        if !*ok {
            return;
        }
        if seg == width {
            let mu_int: f64 =
                mu_idx.iter().map(|&i| values[i]).sum::<f64>() / mu_idx.len() as f64;
            let nu_int: f64 =
                nu_idx.iter().map(|&i| values[i]).sum::<f64>() / nu_idx.len() as f64;
            if mu_int > nu_int + EQ_TOL {
                *ok = false;
            }
            return;
        }
        for slope in min_slope..=4 {
            values[seg + 1] = values[seg] + slope as f64;
            recurse(seg + 1, slope, width, values, mu_idx, nu_idx, ok);
            if !*ok {
                return;
            }
        }
    }
    recurse(0, 0, width, &mut values, &mu_idx, &nu_idx, &mut family_dominates);

    EquivalenceOutcome {
        stop_loss_dominates,
        family_dominates,
    }
}

/// One row of an oracle report; serialized as `check,input,expected,observed,pass`.
#[derive(Debug, Clone)]
pub struct OracleRow {
    pub check: String,
    pub input: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn push(
        &mut self,
        check: impl Into<String>,
        input: impl Into<String>,
        expected: impl Into<String>,
        observed: impl Into<String>,
        pass: bool,
    ) {
        self.rows.push(OracleRow {
            check: check.into(),
            input: input.into(),
            expected: expected.into(),
            observed: observed.into(),
            pass,
        });
    }

    pub fn extend(&mut self, other: OracleReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,input,expected,observed,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.check),
                csv_field(&r.input),
                csv_field(&r.expected),
                csv_field(&r.observed),
                r.pass
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "[{}] {} | input: {} | expected: {} | observed: {}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.input,
                r.expected,
                r.observed
            ));
        }
        let failed = self.rows.iter().filter(|r| !r.pass).count();
        out.push_str(&format!(
            "{} checks, {} failed\n",
            self.rows.len(),
            failed
        ));
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scaled truncated Gaussians: evenness in u, vanishing odd moments,
/// monotonicity of `u -> E f(u Z^h)` in |u| for every catalog function, and
/// minimality at u = 0 of `u -> E f(c + u Z^h)`.
pub fn suite_truncated_gaussian() -> Result<OracleReport, OracleError> {
    let rule = QuadratureRule::standard();
    let (h, lip) = (0.01, 1.0); // threshold 5, inside the base domain
    let mut report = OracleReport::default();
    let tol = 1e-9;

    let u_grid: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();

    // Degenerate scaling and odd-moment symmetry.
    let at_zero = expect_f_of_truncated(&rule, 0.0, h, lip, |z| (z + 0.3).max(0.0));
    report.push(
        "truncated_gaussian_degenerate_u",
        "u=0, f=call(-0.3)",
        "f(0) = 0.3".to_string(),
        format!("{at_zero}"),
        (at_zero - 0.3).abs() < 1e-12,
    );
    for u in [0.5, 1.0, 2.0] {
        let v = expect_f_of_truncated(&rule, u, h, lip, |z| z);
        report.push(
            "truncated_gaussian_odd_moment",
            format!("u={u}, f=identity"),
            "0",
            format!("{v}"),
            v.abs() < 1e-12,
        );
    }

    // Even f is even in u.
    for u in [0.25, 0.75, 1.5] {
        let plus = expect_f_of_truncated(&rule, u, h, lip, f64::abs);
        let minus = expect_f_of_truncated(&rule, -u, h, lip, f64::abs);
        report.push(
            "truncated_gaussian_even_in_u",
            format!("u=+-{u}, f=abs"),
            "equal values",
            format!("{plus} vs {minus}"),
            (plus - minus).abs() < 1e-12,
        );
    }

    // Non-decreasing in |u|: sort the grid by |u| and compare neighbours.
    let mut by_abs = u_grid.clone();
    by_abs.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    let mut catalog: Vec<CatalogFn> = convex_catalog();
    catalog.push(CatalogFn {
        name: "abs".to_string(),
        f: Arc::new(f64::abs),
        kinks: vec![0.0],
    });
    for cat in &catalog {
        let vals: Vec<f64> = by_abs
            .iter()
            .map(|&u| expect_f_of_truncated(&rule, u, h, lip, cat.f.as_ref()))
            .collect();
        let mut worst = 0.0f64;
        for w in vals.windows(2) {
            worst = worst.max(w[0] - w[1]);
        }
        report.push(
            "truncated_gaussian_monotone_in_abs_u",
            format!("f={}, 50-point u-grid", cat.name),
            format!("non-decreasing within {tol}"),
            format!("worst decrease {worst:e}"),
            worst <= tol,
        );
    }

    // Minimum at u = 0 of u -> E f(c + u Z^h) over the symmetric grid.
    let c = 0.3;
    for cat in &catalog {
        let at0 = (cat.f)(c);
        let min_other = u_grid
            .iter()
            .map(|&u| expect_f_of_truncated(&rule, u, h, lip, |z| (cat.f)(c + z)))
            .fold(f64::INFINITY, f64::min);
        report.push(
            "truncated_gaussian_min_at_zero",
            format!("f={}, c={c}", cat.name),
            "grid minimum >= value at u=0",
            format!("{min_other} vs {at0}"),
            min_other >= at0 - tol,
        );
    }
    Ok(report)
}

/// Monotonicity propagation for non-decreasing |sigma| under the regular
/// scheme transition: no violations expected.
pub fn suite_monotonicity() -> Result<OracleReport, OracleError> {
    let rule = QuadratureRule::standard();
    let mut report = OracleReport::default();
    let prop = check_monotonicity_propagation(SigmaKind::NonDecreasing, 0.5, &rule);
    report.push(
        "monotonicity_propagation",
        "sigma in {x^+ + 1, const 1}, h=0.5, x in [-5,5]",
        "no monotonicity or convexity violations",
        format!("{} violations over {} cases", prop.violations.len(), prop.cases),
        prop.passed(),
    );
    Ok(report)
}

/// The decreasing-sigma counterexample: detected loss of monotonicity,
/// closed-form derivative against quadrature finite differences, and the
/// located sign change of the derivative.
pub fn suite_counterexample() -> Result<OracleReport, OracleError> {
    let rule = QuadratureRule::standard();
    let mut report = OracleReport::default();

    let prop = check_monotonicity_propagation(SigmaKind::DecreasingCounterexample, 0.5, &rule);
    let detected = prop
        .violations
        .iter()
        .any(|v| v.kind == "monotonicity" && v.f == "exp(1)" && v.x <= -5.0);
    report.push(
        "counterexample_detection",
        "sigma=expected_excess, f=exp(1), h=0.5",
        "monotonicity violation at some x <= -5",
        format!("{} violations", prop.violations.len()),
        detected,
    );

    // Closed form vs central finite differences of the quadrature
    // transition. The difference is measured relative to the larger of the
    // derivative and the transition value itself: the derivative has a root
    // (near x = -1/h), where a bare relative comparison is ill-posed.
    let delta = 1e-4;
    for &h in &[0.1, 0.5] {
        for &x in &[-10.0, -5.0, -2.0, 0.0, 2.0, 8.0] {
            let closed = counterexample_derivative(x, h);
            let fd = (counterexample_transition(&rule, x + delta, h)
                - counterexample_transition(&rule, x - delta, h))
                / (2.0 * delta);
            let scale = closed.abs().max(counterexample_transition(&rule, x, h));
            let rel = (fd - closed).abs() / scale;
            report.push(
                "counterexample_fd_match",
                format!("x={x}, h={h}"),
                "relative difference <= 1e-6",
                format!("{rel:e}"),
                rel <= 1e-6,
            );
        }
    }

    let v8 = counterexample_derivative(8.0, 0.5);
    let e8 = (8.0f64).exp();
    report.push(
        "counterexample_far_right",
        "x=8, h=0.5",
        "approx exp(8) > 0",
        format!("{v8}"),
        (v8 - e8).abs() / e8 <= 1e-6,
    );
    let vm10 = counterexample_derivative(-10.0, 0.5);
    report.push(
        "counterexample_far_left",
        "x=-10, h=0.5",
        "negative",
        format!("{vm10:e}"),
        vm10 < 0.0,
    );

    // Exactly one sign change on [-20, 20] at h = 0.5, located by bisection
    // on the factor 1 + h sigma sigma'.
    let h = 0.5;
    let grid: Vec<f64> = (0..=400).map(|i| -20.0 + 0.1 * i as f64).collect();
    let signs: Vec<bool> = grid.iter().map(|&x| counterexample_derivative(x, h) > 0.0).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let factor = |x: f64| 1.0 + h * expected_excess(x) * expected_excess_derivative(x);
    let (mut a, mut b) = (-5.0, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if factor(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let root = 0.5 * (a + b);
    let residual = factor(root).abs();
    report.push(
        "counterexample_sign_change",
        "h=0.5, x in [-20, 20]",
        "exactly one sign change, factor root residual <= 1e-8",
        format!("{changes} change(s), root {root:.6}, residual {residual:e}"),
        changes == 1 && residual <= 1e-8,
    );
    Ok(report)
}

/// Runs the finite-support equivalence over the named desk cases plus
/// random atom configurations.
pub fn suite_mcv_equivalence(random_configs: usize, seed: u64) -> OracleReport {
    let mut report = OracleReport::default();

    let same = finite_support_mcv_equivalence(&[1, 3, -2], &[1, 3, -2]);
    report.push(
        "mcv_equivalence_identity",
        "mu = nu = {-2,1,3}",
        "agree, both dominate",
        format!("{same:?}"),
        same.agree() && same.stop_loss_dominates,
    );
    let spread = finite_support_mcv_equivalence(&[0], &[-1, 1]);
    report.push(
        "mcv_equivalence_dirac_vs_spread",
        "mu = d_0, nu = (d_-1 + d_1)/2",
        "agree, both dominate",
        format!("{spread:?}"),
        spread.agree() && spread.stop_loss_dominates,
    );
    let reject = finite_support_mcv_equivalence(&[1], &[0]);
    report.push(
        "mcv_equivalence_shifted_down",
        "mu = d_1, nu = d_0",
        "agree, both reject",
        format!("{reject:?}"),
        reject.agree() && !reject.stop_loss_dominates,
    );

    let agreements: usize = (0..random_configs as u64)
        .into_par_iter()
        .filter(|&i| {
            let draw_atoms = |stream: u64| -> Vec<i32> {
                let count = 1 + (keyed_uniform(seed, stream, i, 0) * 5.0) as usize % 5;
                (0..count)
                    .map(|j| -10 + (keyed_uniform(seed, stream, i, 1 + j as u64) * 21.0) as i32 % 21)
                    .collect()
            };
            finite_support_mcv_equivalence(&draw_atoms(10), &draw_atoms(11)).agree()
        })
        .count();
    report.push(
        "mcv_equivalence_random",
        format!("{random_configs} random atom configurations"),
        format!("{random_configs} agreements"),
        format!("{agreements} agreements"),
        agreements == random_configs,
    );
    report
}

/// Every oracle suite in sequence.
pub fn suite_all() -> Result<OracleReport, OracleError> {
    let mut report = suite_truncated_gaussian()?;
    report.extend(suite_monotonicity()?);
    report.extend(suite_counterexample()?);
    report.extend(suite_mcv_equivalence(10_000, 0xacce5));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_reproduces_normal_moments() {
        let rule = QuadratureRule::standard();
        assert!((rule.normal_expectation(|_| 1.0) - 1.0).abs() < 1e-10);
        assert!(rule.normal_expectation(|z| z).abs() < 1e-10);
        assert!((rule.normal_expectation(|z| z * z) - 1.0).abs() < 1e-10);
        assert!((rule.normal_expectation(|z| z * z * z * z) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn cdf_and_pdf_basics() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_pdf(0.0) - 0.3989422804014327).abs() < 1e-15);
        assert!((normal_sf(1.0) - 0.15865525393145707).abs() < 1e-12);
        // Deep tail keeps relative accuracy.
        assert!(normal_sf(10.0) > 0.0 && normal_sf(10.0) < 1e-22);
    }

    #[test]
    fn truncated_second_moment_matches_closed_form() {
        // E (T^h Z)^2 = 1 - 2(c phi(c) + sf(c)) at threshold c.
        let rule = QuadratureRule::standard();
        let (h, lip) = (0.01, 1.0);
        let c = truncation_threshold(h, lip);
        assert_eq!(c, 5.0);
        let quad = expect_f_of_truncated(&rule, 1.0, h, lip, |z| z * z);
        let closed = 1.0 - 2.0 * (c * normal_pdf(c) + normal_sf(c));
        assert!((quad - closed).abs() < 1e-12, "{quad} vs {closed}");
    }

    #[test]
    fn expected_excess_matches_quadrature() {
        let rule = QuadratureRule::standard();
        for x in [-3.0, -1.0, 0.0, 1.5, 4.0] {
            let quad = rule.normal_expectation(|z| (z - x).max(0.0));
            assert!((expected_excess(x) - quad).abs() < 1e-12);
        }
        // Asymptotics: ~ -x on the far left, ~ 0 on the far right.
        assert!((expected_excess(-10.0) - 10.0).abs() < 1e-10);
        assert!(expected_excess(8.0) > 0.0 && expected_excess(8.0) < 1e-14);
    }

    #[test]
    fn truncated_gaussian_suite_passes() {
        let report = suite_truncated_gaussian().unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn monotonicity_suite_passes() {
        let report = suite_monotonicity().unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn counterexample_suite_passes() {
        let report = suite_counterexample().unwrap();
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn equivalence_desk_cases_and_sample() {
        let report = suite_mcv_equivalence(300, 7);
        assert!(report.passed(), "{}", report.to_text());
    }

    #[test]
    fn oracle_csv_schema() {
        let mut r = OracleReport::default();
        r.push("a", "x=1, y=2", "0", "0", true);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("check,input,expected,observed,pass"));
        assert_eq!(lines.next(), Some("a,\"x=1, y=2\",0,0,true"));
    }
}
