//! Deterministic seed derivation and small sampling helpers.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from
//! the single root seed through [`derive_seed`], so reruns with the same
//! root seed reproduce every output bit for bit.

use rand_core::RngCore;

/// SplitMix64 finalizer; good avalanche for seed whitening.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a 64-bit hash; used for role tags and config fingerprints.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a consumer seed from the root seed and a role tag.
pub fn derive_seed(root: u64, role: &str) -> u64 {
    splitmix64(root ^ fnv1a64(role.as_bytes()))
}

/// Uniform sample in [0, 1) with 53 bits of precision.
pub fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform sample in (-a, a).
pub fn uniform_symmetric(rng: &mut impl RngCore, a: f64) -> f64 {
    a * (2.0 * uniform_f64(rng) - 1.0)
}

/// Standard normal via Box-Muller; self-contained so the stream never
/// depends on a distribution crate's internals.
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    let u1 = uniform_f64(rng).max(f64::MIN_POSITIVE);
    let u2 = uniform_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Unbiased-enough index in [0, n) for shuffling (modulo bias is
/// below 2^-53 for the sizes used here).
pub fn index_below(rng: &mut impl RngCore, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// In-place Fisher-Yates shuffle with an owned, stable implementation.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index_below(rng, i + 1);
        items.swap(i, j);
    }
}
