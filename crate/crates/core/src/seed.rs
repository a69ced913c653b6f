//! Seed splitting.
//!
//! A sub-seed is the first eight bytes (little-endian) of
//! `SHA-256(parent.to_le_bytes() || label)`. Labels are plain ASCII paths such
//! as `"force/dataset"` or `"cups/trial/12"`, so distinct modules never share
//! a random stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive(parent: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(parent.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
