//! Seed derivation.
//!
//! Every random stream in the crate comes from a ChaCha20 generator whose seed
//! is the hash of a master seed, a component name and grid coordinates. Two
//! components never share a stream, and changing one grid axis does not
//! perturb streams keyed on the others.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SeededRng = ChaCha20Rng;

pub fn derive_seed(master: u64, component: &str, keys: &[u64]) -> u64 {
    let mut bytes = Vec::with_capacity(8 + component.len() + 8 * keys.len() + 1);
    bytes.extend_from_slice(&master.to_le_bytes());
    bytes.extend_from_slice(component.as_bytes());
    bytes.push(0);
    for k in keys {
        bytes.extend_from_slice(&k.to_le_bytes());
    }
    crate::io::sha256_u64(&bytes)
}

pub fn stream(master: u64, component: &str, keys: &[u64]) -> SeededRng {
    ChaCha20Rng::seed_from_u64(derive_seed(master, component, keys))
}

/// Grid key for a real-valued coordinate such as a polarity or truncation.
pub fn real_key(value: f64) -> u64 {
    // +0.0 and -0.0 must coincide
    if value == 0.0 {
        0
    } else {
        value.to_bits()
    }
}
