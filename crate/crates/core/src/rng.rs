//! Seeded pseudo-random generation shared by initialization, sampling and
//! mini-batch shuffling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name of the generator algorithm, recorded in run metadata.
pub const ALGORITHM: &str = "chacha8";

pub type SeededRng = ChaCha8Rng;

pub fn generator(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator for `seed`.
pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw from `[lo, hi)`.
pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
