//! Seeded random streams.
//!
//! Every random draw in the crate descends from one 64-bit master seed.
//! A stream is identified by a purpose label and an index:
//!
//! ```text
//! key    = splitmix64(master XOR fnv1a64(purpose))
//! stream = ChaCha8(seed_from_u64(key)) with ChaCha stream id = index
//! ```
//!
//! Labels are short static strings such as `"density"` or `"weight"`; the
//! index distinguishes replica blocks, clusters or chains. Two streams with
//! different labels or indices never share key material.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed, used when an operation hands its seed to another.
pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a64(purpose.as_bytes())) ^ splitmix64(index))
}

pub fn stream(master: u64, purpose: &str, index: u64) -> StreamRng {
    let key = splitmix64(master ^ fnv1a64(purpose.as_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
