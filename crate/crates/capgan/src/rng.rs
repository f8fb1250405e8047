//! Seed derivation.
//!
//! All randomness in the toolkit flows from a single root seed. Components
//! never share a raw RNG; instead each use site derives its own stream from
//! `(root, label, index)`. Derivation is stateless, so resuming a run at
//! step `s` reproduces exactly the stream an uninterrupted run would see.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stateless seed tree rooted at a single u64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derive a child seed for `(label, index)`.
    pub fn derive(&self, label: &str, index: u64) -> u64 {
        let mut h = self.root ^ 0x9e37_79b9_7f4a_7c15;
        for b in label.as_bytes() {
            h = splitmix64(h ^ u64::from(*b));
        }
        splitmix64(h ^ index)
    }

    /// A fresh ChaCha stream for `(label, index)`.
    pub fn rng(&self, label: &str, index: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.derive(label, index))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
