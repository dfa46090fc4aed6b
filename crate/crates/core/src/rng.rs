//! Seeded random streams.
//!
//! Every consumer draws from ChaCha8 keyed by the user seed, on its own
//! stream id, so adding draws in one stage never shifts another stage's
//! numbers. ChaCha is counter based and platform independent; Gaussian
//! draws use Box-Muller on top of it so they are reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids used across the crate.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const ENTANGLEMENT: u64 = 4;
    pub const EXPRESSIBILITY: u64 = 5;
    pub const MINIBATCH: u64 = 6;
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Box-Muller normal sampler; keeps the second variate of each pair.
#[derive(Debug, Default, Clone)]
pub struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
