//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed, with a 64-bit
//! stream index selecting an independent keystream. ChaCha is counter based,
//! so output is identical on every platform and a stream can be derived for
//! any `(seed, index)` pair without generating the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Packs a small tuple of counters into one stream index.
///
/// `tag` occupies the top 8 bits, `major` the next 24 and `minor` the low 32.
pub fn stream_index(tag: u8, major: u64, minor: u64) -> u64 {
    ((tag as u64) << 56) | ((major & 0xFF_FFFF) << 32) | (minor & 0xFFFF_FFFF)
}

/// FNV-1a, used to turn parameter names into stream indices.
pub fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
