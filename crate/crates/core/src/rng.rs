//! Deterministic RNG streams derived from a single run seed.
//!
//! One seed governs all stochastic behavior; sub-streams are derived by
//! hashing the seed together with a textual label and integer indices, so
//! results are independent of evaluation order and parallel scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent RNG stream from `(seed, label, indices)`.
pub fn derive_rng(seed: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([label.len() as u8]);
    hasher.update(label.as_bytes());
    for ix in indices {
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
