//! Deterministic random streams derived from a single run seed.
//!
//! Every consumer (forward sampling, policy rollouts, lambda-search rollouts,
//! per-particle chains) gets its own ChaCha stream, so results do not depend on
//! evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag occupying the high bits of the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Forward = 1,
    Parallel = 2,
    Rollout = 3,
    LambdaRollout = 4,
}

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

    /// Stream for `purpose`, distinguished further by `index` (iteration, particle, ...).
    pub fn rng(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << 56) ^ (index & ((1 << 56) - 1)));
        rng
    }

    /// Child seed space, used when a consumer needs its own family of streams.
    pub fn derive(&self, purpose: Purpose, index: u64) -> Streams {
        use rand::RngCore;
        Streams::new(self.rng(purpose, index).next_u64())
    }
}
