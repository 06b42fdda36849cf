//! Seed derivation for independent, order-free random streams.

use sha2::{Digest, Sha256};

/// Derives a child seed from a master seed and a label.
///
/// The first eight bytes of `SHA-256(master_le ‖ label)`, little-endian. Any
/// two labels give unrelated streams, so results do not depend on the order
/// in which parallel work is scheduled.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
