//! Seeded random streams shared by every stochastic component.
//!
//! All randomness flows through [`DkRng`], a ChaCha8 generator seeded with
//! `seed_from_u64`. Standard normals come from `rand_distr::StandardNormal`
//! (ziggurat). Both are platform independent for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type DkRng = ChaCha8Rng;

/// Human-readable identity of the generator, echoed in run configs.
pub const RNG_IDENTITY: &str = "ChaCha8Rng::seed_from_u64 + rand_distr::StandardNormal (ziggurat)";

pub fn seeded_rng(seed: u64) -> DkRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ]
}
