//! Deterministic seed derivation.
//!
//! Every run takes one root seed; each randomized stage derives its own seed
//! from the root and the stage name, so stages replayed individually match a
//! combined pipeline run.

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive the seed for a named stage from the root seed.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + stage.len());
    bytes.extend_from_slice(&root.to_le_bytes());
    bytes.extend_from_slice(stage.as_bytes());
    fnv1a64(&bytes)
}
