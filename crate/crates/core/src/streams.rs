//! Derived random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a hash of its coordinates, so
//! the same coordinates yield the same draws regardless of which policy runs
//! or how many other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xxhash_rust::xxh3::xxh3_64;

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(parts: &[u64]) -> u64 {
    let bytes: Vec<u8> = parts.iter().flat_map(|p| p.to_le_bytes()).collect();
    xxh3_64(&bytes)
}

pub fn stream(parts: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

pub fn hash_str(s: &str) -> u64 {
    xxh3_64(s.as_bytes())
}

/// Stream tags keep unrelated consumers apart.
pub mod tag {
    pub const QUERIES: u64 = 0x5155_4552;
    pub const OUTCOMES: u64 = 0x4f55_5443;
    pub const POLICY: u64 = 0x504f_4c49;
    pub const INIT: u64 = 0x494e_4954;
}
