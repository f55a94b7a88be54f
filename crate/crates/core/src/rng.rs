//! Seed-stream derivation.
//!
//! Every random stream is keyed by the run seed plus a list of labels (trial index,
//! group id, condition, ...). The stream seed is the first 8 bytes of
//! SHA-256(seed_le || len_le || label || len_le || label ...), so results do not
//! depend on which worker runs which cell or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn stream(seed: u64, labels: &[&str]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, labels))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
