//! Deterministic seed derivation: every randomized stage draws its own seed
//! from the master seed plus a stable stage name, so runs are reproducible
//! end to end and stages stay independent of each other.

/// FNV-1a 64-bit hash. Hand-rolled so the derivation is stable across Rust
/// versions (std's `DefaultHasher` makes no such promise).
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a stage seed from the master seed and a stage label.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut buf = Vec::with_capacity(stage.len() + 8);
    buf.extend_from_slice(&master.to_le_bytes());
    buf.extend_from_slice(stage.as_bytes());
    fnv1a(&buf)
}
