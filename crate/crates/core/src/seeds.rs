//! Order-independent seed derivation, so per-image randomness does not depend
//! on batch order or thread count.

use sha2::{Digest, Sha256};

/// Mixes a base seed with a text tag and a counter into a new seed.
pub fn derive_seed(base: u64, tag: &str, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(counter.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
