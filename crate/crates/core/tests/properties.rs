//! Property suites for the measure machinery: metric axioms, stop-loss
//! shape, order-verdict coherence, mixtures and interpolation.

use mcvorder_core::measures::{
    check_mcv, check_mcv_statistical, default_strike_grid, mixture, wasserstein_p,
    EmpiricalMeasure,
};
use mcvorder_core::paths::interpolate;
use proptest::prelude::*;

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0f64..8.0, n..=n)
}

fn measure(vals: Vec<f64>) -> EmpiricalMeasure {
    EmpiricalMeasure::new(vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wasserstein_metric_axioms((a, b, c) in (2usize..24).prop_flat_map(|n| (samples(n), samples(n), samples(n))), p in prop_oneof![Just(1.0), Just(2.0), Just(3.0)]) {
        let (mu, nu, rho) = (measure(a), measure(b), measure(c));
        let dab = wasserstein_p(&mu, &nu, p).unwrap();
        let dba = wasserstein_p(&nu, &mu, p).unwrap();
        prop_assert_eq!(dab, dba);

        prop_assert_eq!(wasserstein_p(&mu, &mu, p).unwrap(), 0.0);
        if mu.samples() != nu.samples() {
            prop_assert!(dab > 0.0);
        } else {
            prop_assert_eq!(dab, 0.0);
        }

        let dac = wasserstein_p(&mu, &rho, p).unwrap();
        let dcb = wasserstein_p(&rho, &nu, p).unwrap();
        prop_assert!(dab <= dac + dcb + 1e-12, "{} > {} + {}", dab, dac, dcb);
    }

    #[test]
    fn stop_loss_curve_shape(vals in (1usize..24).prop_flat_map(samples)) {
        let mu = measure(vals);
        let strikes: Vec<f64> = (0..41).map(|i| -10.0 + 20.0 * i as f64 / 40.0).collect();
        let curve = mu.stop_loss_curve(&strikes).unwrap();
        for &v in curve.values() {
            prop_assert!(v >= -1e-12);
        }
        for w in curve.values().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!(curve.min_second_difference() >= -1e-12);
        // Below the support the transform is mean - k.
        let k = mu.min() - 1.0;
        prop_assert!((mu.stop_loss(k) - (mu.mean() - k)).abs() < 1e-12);
    }

    #[test]
    fn check_mcv_is_reflexive_and_transitive(vals in (2usize..16).prop_flat_map(samples), s1 in 0.01f64..2.0, s2 in 0.01f64..2.0) {
        let mu = measure(vals.clone());
        let strikes = default_strike_grid(&mu, &mu);
        let refl = check_mcv(&mu, &mu, &strikes, 0.0).unwrap();
        prop_assert!(refl.dominated);
        prop_assert_eq!(refl.worst_margin, 0.0);

        // Chain mu <= nu <= rho by upward shifts; transitivity on the
        // common grid follows strike-by-strike.
        let nu = measure(vals.iter().map(|v| v + s1).collect());
        let rho = measure(vals.iter().map(|v| v + s1 + s2).collect());
        let grid = default_strike_grid(&mu, &rho);
        prop_assert!(check_mcv(&mu, &nu, &grid, 0.0).unwrap().dominated);
        prop_assert!(check_mcv(&nu, &rho, &grid, 0.0).unwrap().dominated);
        prop_assert!(check_mcv(&mu, &rho, &grid, 0.0).unwrap().dominated);
    }

    #[test]
    fn verdict_invariant_holds_under_statistical_tolerance((a, b) in (2usize..24).prop_flat_map(|n| (samples(n), samples(n))), z in 0.0f64..4.0) {
        let (mu, nu) = (measure(a), measure(b));
        let strikes = default_strike_grid(&mu, &nu);
        let v = check_mcv_statistical(&mu, &nu, &strikes, z).unwrap();
        prop_assert_eq!(v.dominated, v.worst_margin >= -v.tolerance_used);
        let plain = check_mcv(&mu, &nu, &strikes, 0.0).unwrap();
        prop_assert_eq!(plain.dominated, plain.worst_margin >= -plain.tolerance_used);
        // Zero tolerance dominance implies statistical dominance.
        if plain.dominated {
            prop_assert!(v.dominated);
        }
    }

    #[test]
    fn mixture_stop_loss_is_linear((a, b) in (2usize..16).prop_flat_map(|n| (samples(n), samples(n))), lambda in 0.0f64..1.0, k in -9.0f64..9.0) {
        let (mu, nu) = (measure(a), measure(b));
        let mix = mixture(&mu, &nu, lambda).unwrap();
        let expected = lambda * mu.stop_loss(k) + (1.0 - lambda) * nu.stop_loss(k);
        prop_assert!((mix.stop_loss(k) - expected).abs() < 1e-12);
        let mean = lambda * mu.mean() + (1.0 - lambda) * nu.mean();
        prop_assert!((mix.mean() - mean).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_affine_paths(a in -4.0f64..4.0, b in -4.0f64..4.0, m in 1usize..24, frac in 0.0f64..1.0) {
        let horizon = 2.0;
        let values: Vec<f64> = (0..=m).map(|i| a * (i as f64 * horizon / m as f64) + b).collect();
        let t = frac * horizon;
        let got = interpolate(&values, t, horizon).unwrap();
        prop_assert!((got - (a * t + b)).abs() < 1e-12);
    }
}
