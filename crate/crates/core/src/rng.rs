//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of a key `(seed, stream, index, slot)`, so
//! any draw can be produced independently of any other: particle workers can
//! generate their own noise in parallel and the result is bit-identical to a
//! sequential pass. There is no generator state to share or advance.

/// SplitMix64 finalizer. Bijective on u64 with strong avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Keyed word: chained bijective mixes over (seed, stream, index, slot).
#[inline]
pub fn keyed_u64(seed: u64, stream: u64, index: u64, slot: u64) -> u64 {
    let s0 = mix64(seed ^ GOLDEN);
    let s1 = mix64(s0 ^ stream.wrapping_mul(GOLDEN));
    let s2 = mix64(s1 ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    mix64(s2 ^ slot.wrapping_mul(0x94D0_49BB_1331_11EB))
}

/// Uniform draw in the open interval (0, 1).
///
/// Uses the top 53 bits plus a half-ulp offset, so 0.0 and 1.0 are never
/// returned and `ln` of the result is always finite.
#[inline]
pub fn keyed_uniform(seed: u64, stream: u64, index: u64, slot: u64) -> f64 {
    let bits = keyed_u64(seed, stream, index, slot);
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw for key `(seed, stream, index)` via Box-Muller.
///
/// Two internal slots feed the transform; callers never see them.
#[inline]
pub fn keyed_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let u1 = keyed_uniform(seed, stream, index, 0);
    let u2 = keyed_uniform(seed, stream, index, 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
