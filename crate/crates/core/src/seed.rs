//! Reproducible randomness: one 64-bit seed split into independent streams.
//!
//! Every consumer draws from its own ChaCha stream (the stream id is the
//! counter-space selector), so adding draws in one module never perturbs
//! another module's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    GateNoise = 1,
    OpponentWaypoints = 2,
    OpponentPlanner = 3,
    PerceptionNoise = 4,
    EventThresholds = 5,
    Dataset = 6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSplitter {
    root: u64,
}

impl SeedSplitter {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        self.rng_indexed(stream, 0)
    }

    /// Stream plus a sub-index (e.g. per racer, per frame).
    pub fn rng_indexed(&self, stream: Stream, index: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(((stream as u64) << 32) | index as u64);
        rng
    }
}
