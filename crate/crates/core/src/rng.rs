//! Deterministic seed derivation.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! master seed and a purpose tag, so adding a consumer never perturbs the
//! draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed `index` of `master`. Counter based: child `k` does not depend
/// on how many other children are drawn.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0xA5A5_5A5A_0F0F_F0F0)))
}

/// Named purposes for sub-streams inside one training run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InitG0 = 1,
    InitG1 = 2,
    InitHeads = 3,
    Split = 4,
    Batches = 5,
    Probes = 6,
    HoldoutProbes = 7,
    Sampling = 8,
    Covariates = 9,
    Treatment = 10,
    Outcomes = 11,
    Frozen = 12,
    Noise = 13,
    Utility = 14,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream as u64))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
