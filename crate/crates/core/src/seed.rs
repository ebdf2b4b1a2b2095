//! Seed fan-out.
//!
//! A run carries one global seed. Each component gets its own seed derived as
//! the first eight bytes (little-endian) of `SHA-256(component_name || ":" ||
//! global_seed.to_le_bytes())`, so components stay independent of each other
//! while the whole run stays reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(global: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(component.as_bytes());
    hasher.update(b":");
    hasher.update(global.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn component_rng(global: u64, component: &str) -> Rng {
    rng_from_seed(derive_seed(global, component))
}
