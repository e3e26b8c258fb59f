//! Deterministic seed derivation.
//!
//! Every random stream in the toolkit is derived from a root seed plus a
//! stage name and an index, so reruns and parallel schedules see the same
//! numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for a named sub-stream of `root`.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name, then mixed with the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(root ^ mix64(h))
}

/// Seed for the `index`-th item of a stream.
pub fn indexed_seed(root: u64, index: u64) -> u64 {
    mix64(root.wrapping_add(mix64(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
