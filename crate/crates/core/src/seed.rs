//! Seed derivation. Every random decision in the harness draws from an RNG
//! seeded by mixing the run seed with a stable description of the decision,
//! so results do not depend on scheduling order.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Hex-encoded SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Seconds since the epoch, pinned by `SOURCE_DATE_EPOCH` when it is set so
/// reruns can produce byte-identical artifacts.
pub fn timestamp_secs() -> u64 {
    if let Some(pinned) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return pinned;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}
