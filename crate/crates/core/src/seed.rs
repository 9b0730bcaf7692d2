//! Stable hashing and per-unit RNG derivation.
//!
//! Every random decision in the pipeline draws from a generator seeded by a
//! hash of the global seed and the identity of the unit of work (a document,
//! a shard, a task). Results therefore do not depend on which worker handles
//! which unit, or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type UnitRng = ChaCha8Rng;

/// 64-bit content hash: the first eight bytes of SHA-256, big endian.
pub fn hash64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn hash64_hex(bytes: &[u8]) -> String {
    format!("{:016x}", hash64(bytes))
}

/// Hex SHA-256 of a byte string, used for file digests and config hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seed for one unit of work. `parts` are length-prefixed so that
/// `("ab", "c")` and `("a", "bc")` do not collide.
pub fn unit_seed(global_seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_be_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 digest is 32 bytes"))
}

pub fn unit_rng(global_seed: u64, parts: &[&str]) -> UnitRng {
    UnitRng::seed_from_u64(unit_seed(global_seed, parts))
}

/// Generator for one document within a named stream (task or stage).
pub fn doc_rng(global_seed: u64, doc_id: &str, stream: &str) -> UnitRng {
    unit_rng(global_seed, &[doc_id, stream])
}
