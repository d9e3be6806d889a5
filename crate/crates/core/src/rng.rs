//! Keyed, stateless randomness.
//!
//! Monte Carlo trials draw from ChaCha8 with the run seed as key and the trial
//! index as stream id, so trial `i` produces the same numbers no matter which
//! worker runs it. Kernel coefficients use a splitmix-style hash of
//! `(seed, index tuple)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a word sequence under a seed.
pub fn hash_words(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = mix64(seed ^ 0x5851_F42D_4C95_7F2D);
    for w in words {
        h = mix64(h ^ w.wrapping_mul(0x2545_F491_4F6C_DD1D));
    }
    h
}

/// Generator for stream `stream` under key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    hash_words(seed, label.bytes().map(u64::from).chain(std::iter::once(index)))
}
