//! Particle simulation of one-dimensional McKean-Vlasov SDEs with the
//! truncated Euler scheme, and certification of the monotone convex
//! (stop-loss) order between coupled processes.
//!
//! The crate is organized around five building blocks:
//!
//! - [`measures`]: sorted empirical measures, exact 1-D Wasserstein
//!   distance, stop-loss transforms and order verdicts;
//! - [`coefficients`]: drift/diffusion pairs with declared regularity
//!   constants, built-in benchmark models and assumption probing;
//! - [`scheme`]: deterministic counter-based noise grids and the truncated /
//!   regular Euler particle engine with common-noise coupling;
//! - [`paths`]: piecewise-affine path reconstruction, path functionals and
//!   Monte Carlo estimates with confidence intervals;
//! - [`oracles`]: quadrature and brute-force cross-checks that are
//!   independent of the Monte Carlo engine.
//!
//! Everything downstream of a `(seed, config)` pair is bit-reproducible,
//! regardless of worker thread count.

pub mod coefficients;
pub mod expr;
pub mod measures;
pub mod numeric;
pub mod oracles;
pub mod paths;
pub mod plot;
pub mod rng;
pub mod scheme;

pub use coefficients::{builtin_model, gbm, CoefficientSet, ModelPair, Relation};
pub use measures::{
    check_mcv, check_mcv_statistical, default_strike_grid, mixture, wasserstein_p,
    EmpiricalMeasure, OrderVerdict, StopLossCurve,
};
pub use paths::{estimate_functional, interpolate, Estimate, FunctionalKind, FunctionalSpec};
pub use scheme::{
    coincidence_probability, euler_step, simulate, simulate_coupled, truncate, NoiseGrid,
    ParticleEnsemble, SchemeConfig, TruncationMode,
};
