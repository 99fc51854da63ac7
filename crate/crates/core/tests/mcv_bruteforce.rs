//! Desk-scale brute-force check that stop-loss dominance over integer
//! strikes decides integral dominance for the full non-decreasing convex
//! class on small finite-support measures.

use mcvorder_core::measures::{check_mcv, EmpiricalMeasure};
use mcvorder_core::rng::keyed_uniform;

/// A non-decreasing convex piecewise-linear function with integer knots in
/// [lo, hi]: base slope plus non-negative call weights at the knots.
struct PiecewiseConvex {
    lo: f64,
    base_slope: f64,
    call_weights: Vec<(f64, f64)>, // (knot, weight >= 0)
}

impl PiecewiseConvex {
    fn eval(&self, x: f64) -> f64 {
        let mut v = self.base_slope * (x - self.lo);
        for &(k, w) in &self.call_weights {
            v += w * (x - k).max(0.0);
        }
        v
    }
}

fn integral(f: &PiecewiseConvex, atoms: &[i32]) -> f64 {
    atoms.iter().map(|&a| f.eval(a as f64)).sum::<f64>() / atoms.len() as f64
}

#[test]
fn stop_loss_dominance_decides_the_convex_class() {
    let seed = 0xb07e5;
    let configs = 200usize;
    let functions_per_config = 1000usize;

    let mut checked = 0usize;
    for c in 0..configs as u64 {
        let draw_atoms = |stream: u64| -> Vec<i32> {
            let count = 1 + (keyed_uniform(seed, stream, c, 0) * 5.0) as usize % 5;
            (0..count)
                .map(|j| -10 + (keyed_uniform(seed, stream, c, 1 + j as u64) * 21.0) as i32 % 21)
                .collect()
        };
        let mu_atoms = draw_atoms(0);
        let nu_atoms = draw_atoms(1);
        let lo = *mu_atoms.iter().chain(&nu_atoms).min().unwrap();
        let hi = *mu_atoms.iter().chain(&nu_atoms).max().unwrap();
        let knots: Vec<i32> = (lo..=hi).collect();

        let mu = EmpiricalMeasure::new(mu_atoms.iter().map(|&a| a as f64).collect()).unwrap();
        let nu = EmpiricalMeasure::new(nu_atoms.iter().map(|&a| a as f64).collect()).unwrap();
        let strikes: Vec<f64> = knots.iter().map(|&k| k as f64).collect();
        let dominated = check_mcv(&mu, &nu, &strikes, 1e-12).unwrap().dominated;

        // The function family: every single call and the identity first
        // (they are the separating directions), then random convex
        // combinations over the hull.
        let mut all_pass = true;
        for trial in 0..functions_per_config as u64 {
            let f = if (trial as usize) < knots.len() {
                PiecewiseConvex {
                    lo: lo as f64,
                    base_slope: 0.0,
                    call_weights: vec![(knots[trial as usize] as f64, 1.0)],
                }
            } else if trial as usize == knots.len() {
                PiecewiseConvex {
                    lo: lo as f64,
                    base_slope: 1.0,
                    call_weights: vec![],
                }
            } else {
                let base_slope = 2.0 * keyed_uniform(seed, 2, c * 4096 + trial, 0);
                let call_weights = knots
                    .iter()
                    .enumerate()
                    .filter_map(|(j, &k)| {
                        let u = keyed_uniform(seed, 3, c * 4096 + trial, j as u64);
                        // Sparse by construction: most knots carry no weight.
                        (u > 0.7).then_some((k as f64, 4.0 * (u - 0.7)))
                    })
                    .collect();
                PiecewiseConvex {
                    lo: lo as f64,
                    base_slope,
                    call_weights,
                }
            };
            let lhs = integral(&f, &mu_atoms);
            let rhs = integral(&f, &nu_atoms);
            if lhs > rhs + 1e-9 * (1.0 + lhs.abs().max(rhs.abs())) {
                all_pass = false;
                break;
            }
        }
        assert_eq!(
            dominated, all_pass,
            "disagreement on config {c}: mu={mu_atoms:?} nu={nu_atoms:?}"
        );
        checked += 1;
    }
    assert_eq!(checked, configs);
}
