//! Labeled random-stream derivation.
//!
//! Every consumer of randomness gets its own ChaCha stream whose seed is a
//! hash of the root seed and a label path. Adding a new consumer never
//! perturbs the streams that already exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Child tree for a labeled sub-consumer.
    pub fn child(&self, label: &str) -> SeedTree {
        SeedTree::new(self.derive(label, 0))
    }

    /// Child tree for the `index`-th replicate or sweep point.
    pub fn indexed(&self, label: &str, index: u64) -> SeedTree {
        SeedTree::new(self.derive(label, index))
    }

    pub fn stream(&self, label: &str) -> SimRng {
        SimRng::seed_from_u64(self.derive(label, 0))
    }

    fn derive(&self, label: &str, index: u64) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(index.to_le_bytes());
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}
