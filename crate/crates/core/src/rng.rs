//! Labeled random stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose key is a
//! SHA-256 digest of the root seed and a path of `(tag, index)` labels. Two
//! streams with different labels are independent, and a stream's content never
//! depends on which thread asks for it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Key of one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"sgextremes/root");
        h.update(seed.to_le_bytes());
        Self(h.finalize().into())
    }

    /// Child stream labeled by a purpose tag and an index.
    pub fn child(&self, tag: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag.as_bytes());
        h.update(index.to_le_bytes());
        Self(h.finalize().into())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    /// First 8 bytes of the key, for logging and manifests.
    pub fn fingerprint(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("8 bytes"))
    }
}
