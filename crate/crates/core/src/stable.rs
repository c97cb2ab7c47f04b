//! Stable hashing used wherever determinism must hold across processes and
//! platforms: dataset splitting, embedding buckets, and sub-seed derivation.

use sha2::{Digest, Sha256};

/// 64-bit digest of the concatenated byte slices. Same inputs give the same
/// value on every platform, unlike `std`'s `DefaultHasher`.
pub fn stable_hash64(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Derives a named sub-seed from a run seed, so split, sampling, and other
/// random choices draw from independent streams.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    stable_hash64(&[&seed.to_le_bytes(), name.as_bytes()])
}
