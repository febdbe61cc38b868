//! Counter-based seed derivation.
//!
//! Every random stream in the library (data, per-column gates, per-ordering
//! inner fits) is keyed by `(root, stream, index)` so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named sub-streams.
pub mod stream {
    pub const GRAPH: u64 = 1;
    pub const WEIGHTS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const GATES: u64 = 4;
    pub const ORDERING: u64 = 5;
    pub const JOINT: u64 = 6;
    pub const BASELINE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ stream) ^ index)
}

pub fn rng(root: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, stream, index))
}

/// FNV-1a over a slice of words; stable across platforms and runs.
pub fn hash_words(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
