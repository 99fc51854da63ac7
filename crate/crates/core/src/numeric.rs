//! Small numeric helpers shared across the crate: compensated summation,
//! mean/stderr reduction and log-log slope fits.

/// Neumaier-compensated sum, accumulated in slice order.
///
/// Rounding error stays O(eps) instead of O(n*eps). The accumulation
/// order is fixed by the slice, so results are bit-reproducible.
pub fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated sum of `f` mapped over `values`, in slice order.
pub fn neumaier_sum_by<F: Fn(f64) -> f64>(values: &[f64], f: F) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let x = f(v);
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error (Bessel-corrected std / sqrt(n)).
///
/// Returns (mean, stderr). For n == 1 the stderr is 0.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "mean_and_stderr on empty slice");
    let mean = neumaier_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = neumaier_sum_by(values, |v| {
        let d = v - mean;
        d * d
    });
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Least-squares slope of ln(y) against ln(x).
///
/// All inputs must be strictly positive; panics otherwise (caller bug).
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "slope fit needs at least two points");
    let lx: Vec<f64> = xs
        .iter()
        .map(|&x| {
            assert!(x > 0.0);
            x.ln()
        })
        .collect();
    let ly: Vec<f64> = ys
        .iter()
        .map(|&y| {
            assert!(y > 0.0);
            y.ln()
        })
        .collect();
    let n = lx.len() as f64;
    let mx = neumaier_sum(&lx) / n;
    let my = neumaier_sum(&ly) / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(ly.iter()) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Format with 17 significant digits, the fixed width used by every CSV
/// this crate writes. Round-trips f64 exactly and is byte-stable.
pub fn fmt_sig17(v: f64) -> String {
    format!("{v:.16e}")
}
