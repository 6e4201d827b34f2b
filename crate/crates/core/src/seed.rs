//! Seed fan-out.
//!
//! Every random quantity in the crate is derived from one 64-bit base seed.
//! Child seeds are produced by [`derive_seed`], which mixes `(base, domain,
//! index)` through the SplitMix64 finalizer. Domains separate independent
//! consumers (training stream, validation set, evaluation noise, ...) so
//! that, for example, validation samples can never coincide with training
//! samples drawn from the same base seed.
//!
//! The generator behind every draw is ChaCha8 ([`rand_chacha::ChaCha8Rng`]),
//! which produces identical streams on every platform. Gaussian draws use the
//! ziggurat transform of [`rand_distr::StandardNormal`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Seed domains. The numeric values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    TrainStream = 1,
    Validation = 2,
    EvalNoise = 3,
    PrecisionNoise = 4,
    NetworkInit = 5,
    Dataset = 6,
    Sequence = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for item `index` of `domain` under `base`.
pub fn derive_seed(base: u64, domain: Domain, index: u64) -> u64 {
    let h = splitmix64(base ^ splitmix64(domain as u64));
    splitmix64(h ^ splitmix64(index.wrapping_mul(GOLDEN)))
}

/// Mix an extra integer into a seed (used for multi-level indices).
pub fn mix(seed: u64, value: u64) -> u64 {
    splitmix64(seed ^ splitmix64(value.wrapping_add(GOLDEN)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
