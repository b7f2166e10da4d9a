//! Seeded random streams.
//!
//! Every random quantity in the simulator is drawn from a ChaCha8 stream whose
//! seed is derived from the master seed and a path of integer tags, e.g.
//! `(seed, drop, trial)`. Streams for distinct tag paths are independent and do
//! not depend on scheduling, so parallel runs reproduce serial runs bit for bit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream purposes, used as the first tag so that e.g. the placement stream
/// of drop 3 never collides with the fading stream of drop 3.
pub mod tag {
    pub const PLACEMENT: u64 = 1;
    pub const LOS: u64 = 2;
    pub const FADING: u64 = 3;
    pub const PILOT: u64 = 4;
    pub const DATA: u64 = 5;
    pub const ORACLE: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a tag path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(master: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tags))
}

/// Standard circularly-symmetric complex Gaussian: unit variance per complex
/// entry, one half per real dimension.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
