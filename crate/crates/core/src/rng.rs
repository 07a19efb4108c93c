//! Seed splitting. Every random stream in a run is derived from one master
//! seed and a stream label, so runs never share hidden RNG state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label for the initial factor.
pub const STREAM_INIT: u64 = 1;
/// Stream label for the asynchronous delay schedule.
pub const STREAM_SCHEDULE: u64 = 2;
/// Stream label for hyperplane rounding.
pub const STREAM_ROUNDING: u64 = 3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tuple of counters into one 64-bit value.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Seed for sub-stream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    hash_words(&[master, stream])
}

/// A ChaCha generator for sub-stream `stream` of `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
