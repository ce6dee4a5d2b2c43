//! Deterministic seed derivation.
//!
//! Every randomized stage of the pipeline draws from a [`rand_chacha`]
//! generator seeded through [`derive_seed`], so a run is a pure function of
//! its configured base seed. Parallel jobs (folds, weeks, thresholds) each
//! derive their own seed from the job coordinates, which keeps results
//! independent of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; mixes one 64-bit word.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of tag words.
///
/// The same `(base, tags)` always yields the same seed; distinct paths are
/// decorrelated by the mixer.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = mix(base ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    state
}

/// A ChaCha generator for the given derivation path.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Maps one 64-bit word to the half-open unit interval.
///
/// Used by the synthetic generator for stateless per-(entity, attempt)
/// draws that stay aligned when other parts of a trajectory change.
pub fn unit_from(base: u64, tags: &[u64]) -> f64 {
    // 53 mantissa bits of the derived word.
    (derive_seed(base, tags) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stable tag for string identifiers (FNV-1a).
pub fn tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
