//! Deterministic RNG streams: every module derives its stream from the
//! single run seed plus a stable label and index, so scenes and seeds can
//! be generated independently and in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in label.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Stream keyed by (seed, label, index).
pub fn stream_rng(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mixed = splitmix64(seed ^ splitmix64(fnv1a(label)) ^ splitmix64(index));
    ChaCha8Rng::seed_from_u64(mixed)
}
