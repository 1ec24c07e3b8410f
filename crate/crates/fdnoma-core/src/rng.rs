//! Named, independent random streams derived from one master seed.
//!
//! Every stochastic element of an experiment (topology, arrivals, fading)
//! pulls from its own ChaCha stream, so a sweep can vary one factor without
//! perturbing the draws of the others, and replications are reproducible
//! from `(master_seed, replication)` alone.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The independent random streams used by a replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Topology = 0,
    Arrivals = 1,
    Fading = 2,
}

/// Spawns deterministic per-purpose RNGs from a master seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedSpawner {
    master: u64,
}

impl SeedSpawner {
    pub fn new(master: u64) -> Self {
        SeedSpawner { master }
    }

    /// RNG for `kind` within replication `replication`.
    ///
    /// Streams are separated through the ChaCha stream id, so all of them
    /// share the master seed but never overlap.
    pub fn stream(&self, kind: StreamKind, replication: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(replication << 3 | kind as u64);
        rng
    }
}
