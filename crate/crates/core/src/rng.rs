//! Deterministic random sub-streams.
//!
//! Every sampling entry point takes an explicit seed. Independent consumers
//! derive their own generator from `(seed, label, index)` so results do not
//! depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed for a named purpose.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(label)) ^ splitmix64(index.wrapping_add(0x5851_f42d)))
}

/// Generator for the sub-stream `(seed, label, index)`.
pub fn stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, label, index))
}
