//! Seed derivation for reproducible Monte-Carlo runs.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose seed is a
//! pure function of the master seed and a path of indices (trial, link,
//! purpose). Results therefore do not depend on execution order or on how
//! many worker threads run the cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        SeedStream(splitmix64(master_seed))
    }

    /// Derives an independent child stream.
    pub fn child(self, index: u64) -> Self {
        SeedStream(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)),
        ))
    }

    /// Shorthand for a chain of [`child`](Self::child) calls.
    pub fn path(self, indices: &[u64]) -> Self {
        indices.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

// Stafford variant 13 finalizer.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags used as the last component of a seed path.
pub mod purpose {
    pub const CHANNEL: u64 = 1;
    pub const MEASUREMENT_NOISE: u64 = 2;
    pub const POSITION_ERROR: u64 = 3;
    pub const INITIAL_CONFIG: u64 = 4;
}
