//! Seeded randomness. Every sampling decision draws from its own ChaCha20
//! stream whose key is `SHA-256(seed || purpose || key)`, so a source's outcome
//! does not depend on which other sources are present or their order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Recorded in manifests so readers know how the seed was expanded.
pub const GENERATOR: &str = "chacha20/sha256-subseed-v1";

pub fn sub_rng(seed: u64, purpose: &str, key: &str) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update([0u8]);
    hasher.update(key.as_bytes());
    ChaCha20Rng::from_seed(hasher.finalize().into())
}
