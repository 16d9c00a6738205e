//! Seeded, splittable random streams.
//!
//! Every stochastic operation takes an explicit stream. Stream `i` of a
//! master seed is a ChaCha8 generator keyed by the seed with its stream word
//! set to `i`, so trajectory `i` draws the same numbers no matter how many
//! workers run or in what order they are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type handed to stochastic operations.
pub type Stream = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream number `index`.
    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}
