//! Empirical probability measures on the real line.
//!
//! An [`EmpiricalMeasure`] is a sorted multiset of N equally weighted atoms.
//! On these measures the crate provides the exact 1-D Wasserstein distance,
//! the stop-loss transform `k -> E(X - k)^+`, and certification of the
//! monotone convex (stop-loss) order: `mu` is dominated by `nu` when every
//! non-decreasing convex test integral is ordered, which for these measures
//! reduces to stop-loss dominance over a strike grid.

use std::sync::OnceLock;

use crate::numeric::{fmt_sig17, neumaier_sum, neumaier_sum_by};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MeasureError {
    #[error("empirical measure needs at least one sample")]
    Empty,
    #[error("sample {index} is not finite: {value}")]
    NotFinite { index: usize, value: f64 },
    #[error("sample counts differ: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },
    #[error("wasserstein order must satisfy p >= 1, got {0}")]
    BadOrder(f64),
    #[error("strike grid is empty")]
    EmptyStrikes,
    #[error("mixture weight must lie in [0, 1], got {0}")]
    BadMixtureWeight(f64),
}

/// Mean-field statistics a measure can report. These are the particle-method
/// averages coefficient functions and composite functionals may query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanField {
    X,
    X2,
    Sin,
    Cos,
    Sin2,
}

/// Anything that can answer mean-field statistic queries.
pub trait MeasureStats {
    fn mean_field(&self, stat: MeanField) -> f64;
}

#[derive(Debug, Default, Clone)]
struct StatsCache {
    mean: OnceLock<f64>,
    mean_x2: OnceLock<f64>,
    mean_sin: OnceLock<f64>,
    mean_cos: OnceLock<f64>,
    mean_sin2: OnceLock<f64>,
}

/// Sorted equal-weight sample multiset standing in for a distribution in
/// P_p(R). Immutable after construction; cheap statistic caches make it safe
/// to query from many particle workers at once.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    cache: StatsCache,
}

impl PartialEq for EmpiricalMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples
    }
}

impl EmpiricalMeasure {
    /// Builds a measure from raw samples, sorting them ascending.
    /// Rejects empty input and any non-finite value.
    pub fn new(mut samples: Vec<f64>) -> Result<Self, MeasureError> {
        if samples.is_empty() {
            return Err(MeasureError::Empty);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(MeasureError::NotFinite { index, value });
            }
        }
        samples.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        Ok(Self {
            samples,
            cache: StatsCache::default(),
        })
    }

    /// A Dirac mass at `value`, realized as `count` equal atoms.
    pub fn dirac(value: f64, count: usize) -> Result<Self, MeasureError> {
        Self::new(vec![value; count])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    /// Samples in ascending order.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        *self.samples.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        *self
            .cache
            .mean
            .get_or_init(|| neumaier_sum(&self.samples) / self.len() as f64)
    }

    /// Bessel-corrected sample standard deviation (0 for a single atom).
    pub fn std(&self) -> f64 {
        let n = self.len();
        if n == 1 {
            return 0.0;
        }
        let m = self.mean();
        let ss = neumaier_sum_by(&self.samples, |x| (x - m) * (x - m));
        (ss / (n - 1) as f64).sqrt()
    }

    /// Left-continuous empirical quantile for q in [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..=1.0).contains(&q), "quantile level out of range");
        let n = self.len();
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.samples[idx]
    }

    /// Stop-loss transform `E (X - k)^+` at a single strike.
    pub fn stop_loss(&self, k: f64) -> f64 {
        let idx = self.samples.partition_point(|&x| x <= k);
        let tail = &self.samples[idx..];
        if tail.is_empty() {
            return 0.0;
        }
        neumaier_sum_by(tail, |x| x - k) / self.len() as f64
    }

    /// Stop-loss values over a strike grid, via suffix sums (O(N + G log N)).
    pub fn stop_loss_curve(&self, strikes: &[f64]) -> Result<StopLossCurve, MeasureError> {
        if strikes.is_empty() {
            return Err(MeasureError::EmptyStrikes);
        }
        let tails = TailSums::new(&self.samples);
        let values = strikes
            .iter()
            .map(|&k| tails.stop_loss(&self.samples, k) / self.len() as f64)
            .collect();
        StopLossCurve::new(strikes.to_vec(), values)
    }
}

impl MeasureStats for EmpiricalMeasure {
    fn mean_field(&self, stat: MeanField) -> f64 {
        let n = self.len() as f64;
        match stat {
            MeanField::X => self.mean(),
            MeanField::X2 => *self
                .cache
                .mean_x2
                .get_or_init(|| neumaier_sum_by(&self.samples, |x| x * x) / n),
            MeanField::Sin => *self
                .cache
                .mean_sin
                .get_or_init(|| neumaier_sum_by(&self.samples, f64::sin) / n),
            MeanField::Cos => *self
                .cache
                .mean_cos
                .get_or_init(|| neumaier_sum_by(&self.samples, f64::cos) / n),
            MeanField::Sin2 => *self.cache.mean_sin2.get_or_init(|| {
                neumaier_sum_by(&self.samples, |x| {
                    let s = x.sin();
                    s * s
                }) / n
            }),
        }
    }
}

/// Suffix sums of x and x^2 over sorted samples; shared by the stop-loss
/// curve and the per-strike variance used for statistical tolerances.
struct TailSums {
    suffix_x: Vec<f64>,
    suffix_x2: Vec<f64>,
}

impl TailSums {
    fn new(sorted: &[f64]) -> Self {
        let n = sorted.len();
        let mut suffix_x = vec![0.0; n + 1];
        let mut suffix_x2 = vec![0.0; n + 1];
        let mut sx = 0.0f64;
        let mut cx = 0.0f64;
        let mut sx2 = 0.0f64;
        let mut cx2 = 0.0f64;
        for i in (0..n).rev() {
            let x = sorted[i];
            let t = sx + x;
            cx += if sx.abs() >= x.abs() { (sx - t) + x } else { (x - t) + sx };
            sx = t;
            suffix_x[i] = sx + cx;
            let x2 = x * x;
            let t2 = sx2 + x2;
            cx2 += if sx2.abs() >= x2 { (sx2 - t2) + x2 } else { (x2 - t2) + sx2 };
            sx2 = t2;
            suffix_x2[i] = sx2 + cx2;
        }
        Self { suffix_x, suffix_x2 }
    }

    /// N * E (X - k)^+ (caller divides by N).
    fn stop_loss(&self, sorted: &[f64], k: f64) -> f64 {
        let idx = sorted.partition_point(|&x| x <= k);
        let count = (sorted.len() - idx) as f64;
        self.suffix_x[idx] - k * count
    }

    /// Sample variance of (X - k)^+ over the N atoms.
    fn stop_loss_variance(&self, sorted: &[f64], k: f64) -> f64 {
        let n = sorted.len() as f64;
        if sorted.len() < 2 {
            return 0.0;
        }
        let idx = sorted.partition_point(|&x| x <= k);
        let count = (sorted.len() - idx) as f64;
        let s1 = self.suffix_x[idx] - k * count;
        let s2 = self.suffix_x2[idx] - 2.0 * k * self.suffix_x[idx] + k * k * count;
        let mean = s1 / n;
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    }
}

/// Exact p-Wasserstein distance between equal-size empirical measures:
/// the sorted pairing is the optimal coupling for equal-weight atoms on R.
pub fn wasserstein_p(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    p: f64,
) -> Result<f64, MeasureError> {
    if p < 1.0 {
        return Err(MeasureError::BadOrder(p));
    }
    if mu.len() != nu.len() {
        return Err(MeasureError::CountMismatch {
            left: mu.len(),
            right: nu.len(),
        });
    }
    let n = mu.len() as f64;
    let mut terms = Vec::with_capacity(mu.len());
    for (x, y) in mu.samples().iter().zip(nu.samples()) {
        terms.push((x - y).abs().powf(p));
    }
    Ok((neumaier_sum(&terms) / n).powf(1.0 / p))
}

/// Stop-loss transform values over an ascending strike grid.
///
/// By construction the curve is non-negative, non-increasing and convex in
/// the strike; the constructor enforces those shape constraints up to
/// rounding tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct StopLossCurve {
    strikes: Vec<f64>,
    values: Vec<f64>,
}

impl StopLossCurve {
    const SHAPE_TOL: f64 = 1e-12;

    pub fn new(strikes: Vec<f64>, values: Vec<f64>) -> Result<Self, MeasureError> {
        if strikes.is_empty() {
            return Err(MeasureError::EmptyStrikes);
        }
        assert_eq!(strikes.len(), values.len());
        debug_assert!(strikes.windows(2).all(|w| w[0] < w[1]), "strikes ascending");
        let scale = values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let tol = Self::SHAPE_TOL * scale;
        for (i, &v) in values.iter().enumerate() {
            debug_assert!(v >= -tol, "stop-loss value negative at strike index {i}: {v}");
        }
        for w in values.windows(2) {
            debug_assert!(w[1] <= w[0] + tol, "stop-loss curve must be non-increasing");
        }
        Ok(Self { strikes, values })
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Minimum discrete second difference, >= -tol for a convex curve.
    pub fn min_second_difference(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 1..self.values.len().saturating_sub(1) {
            let dl = (self.values[i] - self.values[i - 1]) / (self.strikes[i] - self.strikes[i - 1]);
            let dr = (self.values[i + 1] - self.values[i]) / (self.strikes[i + 1] - self.strikes[i]);
            worst = worst.min(dr - dl);
        }
        worst
    }

    /// CSV with header `strike,value`, one row per strike, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strike,value\n");
        for (k, v) in self.strikes.iter().zip(&self.values) {
            out.push_str(&fmt_sig17(*k));
            out.push(',');
            out.push_str(&fmt_sig17(*v));
            out.push('\n');
        }
        out
    }
}

/// Outcome of a stop-loss dominance test between two measures.
///
/// `worst_margin` is the dominating-side surplus `SL_nu - SL_mu` at the
/// binding strike (the strike minimizing margin plus its tolerance), so the
/// invariant `dominated == (worst_margin >= -tolerance_used)` always holds,
/// also under per-strike statistical tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderVerdict {
    pub dominated: bool,
    pub worst_margin: f64,
    pub worst_strike: f64,
    pub tolerance_used: f64,
}

/// Stop-loss dominance with one tolerance per strike.
pub fn check_mcv_with_tolerances(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    strikes: &[f64],
    tolerances: &[f64],
) -> Result<OrderVerdict, MeasureError> {
    if strikes.is_empty() {
        return Err(MeasureError::EmptyStrikes);
    }
    assert_eq!(strikes.len(), tolerances.len());
    let mu_tails = TailSums::new(mu.samples());
    let nu_tails = TailSums::new(nu.samples());
    let n_mu = mu.len() as f64;
    let n_nu = nu.len() as f64;

    let mut dominated = true;
    let mut best_slack = f64::INFINITY;
    let mut binding = (0usize, 0.0f64);
    for (i, (&k, &tol)) in strikes.iter().zip(tolerances).enumerate() {
        debug_assert!(tol >= 0.0);
        let margin = nu_tails.stop_loss(nu.samples(), k) / n_nu
            - mu_tails.stop_loss(mu.samples(), k) / n_mu;
        if margin < -tol {
            dominated = false;
        }
        // Ties broken toward the largest strike: stop-loss differences
        // flatten to the mean difference far left of the support, so the
        // rightmost minimizer localizes the failure.
        let slack = margin + tol;
        if slack <= best_slack {
            best_slack = slack;
            binding = (i, margin);
        }
    }
    let (idx, worst_margin) = binding;
    Ok(OrderVerdict {
        dominated,
        worst_margin,
        worst_strike: strikes[idx],
        tolerance_used: tolerances[idx],
    })
}

/// Stop-loss dominance `mu ?<= nu` with a uniform tolerance:
/// dominated iff `SL_mu(k) <= SL_nu(k) + tolerance` for every strike.
pub fn check_mcv(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    strikes: &[f64],
    tolerance: f64,
) -> Result<OrderVerdict, MeasureError> {
    let tols = vec![tolerance; strikes.len()];
    check_mcv_with_tolerances(mu, nu, strikes, &tols)
}

/// Stop-loss dominance with the statistical tolerance `z` times the pooled
/// standard error of the stop-loss difference at each strike. Monte Carlo
/// inputs should not fail certification on violations smaller than noise.
pub fn check_mcv_statistical(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    strikes: &[f64],
    z: f64,
) -> Result<OrderVerdict, MeasureError> {
    if strikes.is_empty() {
        return Err(MeasureError::EmptyStrikes);
    }
    let mu_tails = TailSums::new(mu.samples());
    let nu_tails = TailSums::new(nu.samples());
    let tols: Vec<f64> = strikes
        .iter()
        .map(|&k| {
            let var_mu = mu_tails.stop_loss_variance(mu.samples(), k) / mu.len() as f64;
            let var_nu = nu_tails.stop_loss_variance(nu.samples(), k) / nu.len() as f64;
            z * (var_mu + var_nu).sqrt()
        })
        .collect();
    check_mcv_with_tolerances(mu, nu, strikes, &tols)
}

/// Default strike grid: 129 equally spaced strikes spanning the pooled
/// samples widened by one pooled standard deviation on each side. Stop-loss
/// curves are piecewise linear with knots at the atoms, so a dense bracketing
/// grid bounds the sup-gap.
pub fn default_strike_grid(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<f64> {
    const COUNT: usize = 129;
    let mut pooled: Vec<f64> = Vec::with_capacity(mu.len() + nu.len());
    pooled.extend_from_slice(mu.samples());
    pooled.extend_from_slice(nu.samples());
    let n = pooled.len() as f64;
    let mean = neumaier_sum(&pooled) / n;
    let ss = neumaier_sum_by(&pooled, |x| (x - mean) * (x - mean));
    let sd = if pooled.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let pad = if sd > 0.0 { sd } else { 1.0 };
    let lo = mu.min().min(nu.min()) - pad;
    let hi = mu.max().max(nu.max()) + pad;
    (0..COUNT)
        .map(|i| lo + (hi - lo) * i as f64 / (COUNT - 1) as f64)
        .collect()
}

/// Weighted atom measure produced by mixing two empirical measures:
/// every atom of `mu` with weight `lambda / N` and every atom of `nu` with
/// weight `(1 - lambda) / N`. Weights stay explicit internally; flattening to
/// uniform atoms happens only on export.
#[derive(Debug, Clone)]
pub struct MixtureMeasure {
    atoms: Vec<(f64, f64)>, // (value, weight), sorted by value
    cache: StatsCache,
}

impl PartialEq for MixtureMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms
    }
}

impl MixtureMeasure {
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        *self.cache.mean.get_or_init(|| self.weighted(|x| x))
    }

    fn weighted<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = self.atoms.iter().map(|&(x, w)| w * f(x)).collect();
        neumaier_sum(&terms)
    }

    pub fn stop_loss(&self, k: f64) -> f64 {
        self.weighted(|x| (x - k).max(0.0))
    }

    /// Left-continuous weighted quantile.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..=1.0).contains(&q));
        let mut acc = 0.0;
        for &(x, w) in &self.atoms {
            acc += w;
            if acc >= q {
                return x;
            }
        }
        self.atoms.last().unwrap().0
    }

    /// Uniform-weight export: `count` atoms at mid-level quantiles.
    pub fn flatten_uniform(&self, count: usize) -> Result<EmpiricalMeasure, MeasureError> {
        if count == 0 {
            return Err(MeasureError::Empty);
        }
        let samples = (0..count)
            .map(|j| self.quantile((j as f64 + 0.5) / count as f64))
            .collect();
        EmpiricalMeasure::new(samples)
    }
}

impl MeasureStats for MixtureMeasure {
    fn mean_field(&self, stat: MeanField) -> f64 {
        match stat {
            MeanField::X => self.mean(),
            MeanField::X2 => *self.cache.mean_x2.get_or_init(|| self.weighted(|x| x * x)),
            MeanField::Sin => *self.cache.mean_sin.get_or_init(|| self.weighted(f64::sin)),
            MeanField::Cos => *self.cache.mean_cos.get_or_init(|| self.weighted(f64::cos)),
            MeanField::Sin2 => *self.cache.mean_sin2.get_or_init(|| {
                self.weighted(|x| {
                    let s = x.sin();
                    s * s
                })
            }),
        }
    }
}

/// Measure interpolation `lambda * mu + (1 - lambda) * nu` on marginal flows.
/// Requires equal sample counts (kept exact rather than resampled).
pub fn mixture(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    lambda: f64,
) -> Result<MixtureMeasure, MeasureError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MeasureError::BadMixtureWeight(lambda));
    }
    if mu.len() != nu.len() {
        return Err(MeasureError::CountMismatch {
            left: mu.len(),
            right: nu.len(),
        });
    }
    let n = mu.len() as f64;
    let w_mu = lambda / n;
    let w_nu = (1.0 - lambda) / n;
    let mut atoms = Vec::with_capacity(2 * mu.len());
    let (a, b) = (mu.samples(), nu.samples());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            atoms.push((a[i], w_mu));
            i += 1;
        } else {
            atoms.push((b[j], w_nu));
            j += 1;
        }
    }
    atoms.extend(a[i..].iter().map(|&x| (x, w_mu)));
    atoms.extend(b[j..].iter().map(|&x| (x, w_nu)));
    Ok(MixtureMeasure {
        atoms,
        cache: StatsCache::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed_normal;

    fn measure(vals: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(vals.to_vec()).unwrap()
    }

    /// Brute-force Wasserstein over all bijections, the independent oracle
    /// for the sorted-pairing formula on tiny inputs.
    fn wasserstein_brute(a: &[f64], b: &[f64], p: f64) -> f64 {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for rest in permutations(n - 1) {
                for pos in 0..n {
                    let mut perm = rest.clone();
                    perm.insert(pos, n - 1);
                    out.push(perm);
                }
            }
            out
        }
        let n = a.len();
        let mut best = f64::INFINITY;
        for perm in permutations(n) {
            let cost: f64 = (0..n).map(|i| (a[i] - b[perm[i]]).abs().powf(p)).sum();
            best = best.min((cost / n as f64).powf(1.0 / p));
        }
        best
    }

    #[test]
    fn wasserstein_identity_is_zero() {
        let mu = measure(&[0.3, -1.0, 2.0]);
        assert_eq!(wasserstein_p(&mu, &mu, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_dirac_translation() {
        let mu = measure(&[0.0; 8]);
        let nu = measure(&[-2.5; 8]);
        assert!((wasserstein_p(&mu, &nu, 3.0).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_matches_brute_force_minimum() {
        // Frozen from the 2! bijection enumeration: min of (1+1)/2 and (2+0)/2.
        let mu = measure(&[0.0, 1.0]);
        let nu = measure(&[1.0, 2.0]);
        assert_eq!(wasserstein_p(&mu, &nu, 1.0).unwrap(), 1.0);
        assert_eq!(wasserstein_brute(&[0.0, 1.0], &[1.0, 2.0], 1.0), 1.0);

        // And on slightly larger deterministic cases.
        for trial in 0..20u64 {
            let a: Vec<f64> = (0..5)
                .map(|i| keyed_normal(900 + trial, 0, i) * 2.0)
                .collect();
            let b: Vec<f64> = (0..5)
                .map(|i| keyed_normal(900 + trial, 1, i) * 2.0)
                .collect();
            for p in [1.0, 2.0] {
                let fast = wasserstein_p(&measure(&a), &measure(&b), p).unwrap();
                let slow = wasserstein_brute(&a, &b, p);
                assert!(
                    (fast - slow).abs() < 1e-12,
                    "p={p} fast={fast} brute={slow}"
                );
            }
        }
    }

    #[test]
    fn wasserstein_rejects_bad_inputs() {
        let mu = measure(&[0.0, 1.0]);
        let nu = measure(&[0.0]);
        assert!(matches!(
            wasserstein_p(&mu, &nu, 1.0),
            Err(MeasureError::CountMismatch { .. })
        ));
        assert!(matches!(
            wasserstein_p(&mu, &mu, 0.5),
            Err(MeasureError::BadOrder(_))
        ));
    }

    #[test]
    fn stop_loss_dirac_below_strike() {
        let mu = measure(&[0.0; 4]);
        assert_eq!(mu.stop_loss(-1.0), 1.0);
    }

    #[test]
    fn stop_loss_two_atoms() {
        // Direct enumeration: ((1-2)^+ + (3-2)^+)/2 = 0.5.
        let mu = measure(&[1.0, 3.0]);
        assert_eq!(mu.stop_loss(2.0), 0.5);
    }

    #[test]
    fn stop_loss_of_standard_normal_matches_density_at_zero() {
        // Quadrature oracle: integral of z phi(z) over z > 0 equals phi(0).
        let n = 1_000_000u64;
        let draws: Vec<f64> = (0..n).map(|i| keyed_normal(77, 0, i)).collect();
        let mu = EmpiricalMeasure::new(draws).unwrap();
        let est = mu.stop_loss(0.0);
        let positives: Vec<f64> = mu.samples().iter().map(|&z| z.max(0.0)).collect();
        let (_, se) = crate::numeric::mean_and_stderr(&positives);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!(
            (est - phi0).abs() <= 3.0 * se,
            "est={est} phi0={phi0} se={se}"
        );
    }

    #[test]
    fn stop_loss_equals_mean_minus_strike_below_support() {
        let mu = measure(&[0.5, 1.5, 4.0]);
        let k = -3.0;
        assert!((mu.stop_loss(k) - (mu.mean() - k)).abs() < 1e-15);
    }

    #[test]
    fn curve_matches_single_strike_calls_and_shape() {
        let mu = measure(&[-1.0, 0.0, 2.0, 2.0, 5.0]);
        let strikes: Vec<f64> = (-6..=8).map(|k| k as f64 * 0.5).collect();
        let curve = mu.stop_loss_curve(&strikes).unwrap();
        for (&k, &v) in curve.strikes().iter().zip(curve.values()) {
            assert!((v - mu.stop_loss(k)).abs() < 1e-14);
        }
        assert!(curve.min_second_difference() >= -1e-12);
    }

    #[test]
    fn check_mcv_dirac_ordering() {
        let d0 = measure(&[0.0; 3]);
        let d1 = measure(&[1.0; 3]);
        let grid = [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0];
        let up = check_mcv(&d0, &d1, &grid, 0.0).unwrap();
        assert!(up.dominated);
        let down = check_mcv(&d1, &d0, &grid, 0.0).unwrap();
        assert!(!down.dominated);
        assert_eq!(down.worst_strike, 0.0);
        assert_eq!(down.worst_margin, -1.0);
        assert_eq!(down.dominated, down.worst_margin >= -down.tolerance_used);
    }

    #[test]
    fn check_mcv_statistical_binding_strike_keeps_invariant() {
        let n = 4000u64;
        let mu = EmpiricalMeasure::new((0..n).map(|i| keyed_normal(5, 0, i)).collect::<Vec<_>>())
            .unwrap();
        let nu = EmpiricalMeasure::new(
            (0..n)
                .map(|i| keyed_normal(5, 1, i) * 1.2 + 0.05)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let grid = default_strike_grid(&mu, &nu);
        let verdict = check_mcv_statistical(&mu, &nu, &grid, 3.0).unwrap();
        assert_eq!(
            verdict.dominated,
            verdict.worst_margin >= -verdict.tolerance_used
        );
    }

    #[test]
    fn tail_sums_variance_matches_direct_computation() {
        let samples = [-1.0, 0.5, 1.0, 3.0, 3.0, 7.5];
        let tails = TailSums::new(&samples);
        for k in [-2.0, 0.0, 0.9, 3.0, 10.0] {
            let calls: Vec<f64> = samples.iter().map(|x| (x - k).max(0.0)).collect();
            let n = calls.len() as f64;
            let mean = calls.iter().sum::<f64>() / n;
            let direct = calls.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            let fast = tails.stop_loss_variance(&samples, k);
            assert!((fast - direct).abs() < 1e-13, "k={k}: {fast} vs {direct}");
        }
    }

    #[test]
    fn statistical_tolerance_absorbs_sub_noise_violations_only() {
        // nu sits slightly below mu; with wide scatter the gap is inside
        // z * pooled stderr, with tight scatter it is resolved as a failure.
        let n = 400u64;
        let gap = 0.02;
        let scatter = |spread: f64, stream: u64| -> Vec<f64> {
            (0..n).map(|i| spread * keyed_normal(88, stream, i)).collect()
        };
        let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.25).collect();

        let mu = measure(&scatter(1.0, 0));
        let nu = measure(&scatter(1.0, 1).iter().map(|v| v - gap).collect::<Vec<_>>());
        let noisy = check_mcv_statistical(&mu, &nu, &grid, 3.0).unwrap();
        assert!(noisy.dominated, "sub-noise violation must certify: {noisy:?}");

        let mu = measure(&scatter(1e-4, 0));
        let nu = measure(&scatter(1e-4, 1).iter().map(|v| v - gap).collect::<Vec<_>>());
        let sharp = check_mcv_statistical(&mu, &nu, &grid, 3.0).unwrap();
        assert!(!sharp.dominated, "resolvable violation must fail: {sharp:?}");
        assert!(sharp.worst_margin < -sharp.tolerance_used);
    }

    #[test]
    fn empty_strike_grid_is_an_error() {
        let mu = measure(&[0.0]);
        assert_eq!(
            check_mcv(&mu, &mu, &[], 0.0).unwrap_err(),
            MeasureError::EmptyStrikes
        );
    }

    #[test]
    fn default_grid_brackets_and_is_ascending() {
        let mu = measure(&[-1.0, 0.0, 1.0]);
        let nu = measure(&[0.5, 2.0, 3.0]);
        let grid = default_strike_grid(&mu, &nu);
        assert_eq!(grid.len(), 129);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid[0] < -1.0 && *grid.last().unwrap() > 3.0);
    }

    #[test]
    fn mixture_degenerate_weights_reproduce_inputs() {
        let mu = measure(&[0.0, 1.0, 4.0]);
        let nu = measure(&[-2.0, 0.5, 3.0]);
        let only_mu = mixture(&mu, &nu, 1.0).unwrap();
        let only_nu = mixture(&mu, &nu, 0.0).unwrap();
        for k in [-3.0, -1.0, 0.0, 0.7, 2.0, 5.0] {
            assert!((only_mu.stop_loss(k) - mu.stop_loss(k)).abs() < 1e-15);
            assert!((only_nu.stop_loss(k) - nu.stop_loss(k)).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_half_of_diracs() {
        let d0 = measure(&[0.0; 5]);
        let d1 = measure(&[1.0; 5]);
        let mix = mixture(&d0, &d1, 0.5).unwrap();
        assert!((mix.stop_loss(0.0) - 0.5).abs() < 1e-15);
        assert!((mix.mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_rejects_bad_lambda_and_counts() {
        let mu = measure(&[0.0, 1.0]);
        let nu = measure(&[0.0]);
        assert!(matches!(
            mixture(&mu, &mu, 1.5),
            Err(MeasureError::BadMixtureWeight(_))
        ));
        assert!(matches!(
            mixture(&mu, &nu, 0.5),
            Err(MeasureError::CountMismatch { .. })
        ));
    }

    #[test]
    fn mixture_flatten_preserves_quantiles() {
        let mu = measure(&[0.0, 1.0, 2.0, 3.0]);
        let nu = measure(&[10.0, 11.0, 12.0, 13.0]);
        let mix = mixture(&mu, &nu, 0.5).unwrap();
        let flat = mix.flatten_uniform(8).unwrap();
        assert_eq!(flat.len(), 8);
        assert_eq!(flat.samples(), &[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn construction_rejects_bad_samples() {
        assert_eq!(EmpiricalMeasure::new(vec![]).unwrap_err(), MeasureError::Empty);
        assert!(matches!(
            EmpiricalMeasure::new(vec![0.0, f64::NAN]),
            Err(MeasureError::NotFinite { index: 1, .. })
        ));
    }

    #[test]
    fn csv_has_header_and_17_digits() {
        let mu = measure(&[1.0, 2.0]);
        let curve = mu.stop_loss_curve(&[0.0, 1.0]).unwrap();
        let csv = curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("strike,value"));
        let first = lines.next().unwrap();
        assert_eq!(first, "0.0000000000000000e0,1.5000000000000000e0");
    }

    #[test]
    fn mean_field_stats_agree_with_direct_averages() {
        let mu = measure(&[0.1, -0.7, 2.0, 3.5]);
        let direct: f64 = mu.samples().iter().map(|x| x.sin()).sum::<f64>() / 4.0;
        assert!((mu.mean_field(MeanField::Sin) - direct).abs() < 1e-15);
        let d2: f64 = mu.samples().iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((mu.mean_field(MeanField::X2) - d2).abs() < 1e-15);
    }
}
