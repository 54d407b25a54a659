//! Seed derivation and content digests.
//!
//! All randomness in the toolkit is derived from a root seed through
//! [`derive_seed`], keyed by a label (stage name, record text, ...), so that
//! adding one consumer never shifts the stream seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(root: u64, label: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lowercase hex sha256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 128-bit content key; used where a set of millions of keys must stay small.
pub fn key128(bytes: &[u8]) -> u128 {
    let out = Sha256::digest(bytes);
    u128::from_le_bytes(out[..16].try_into().unwrap())
}
