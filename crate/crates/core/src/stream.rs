//! Seeded substreams.
//!
//! Every random quantity in the crate is derived from a 64-bit key that is a
//! pure function of a master seed, a domain tag and the identity of the thing
//! being randomized (a subsample index tuple, a replicate number, ...). Work
//! can therefore be split across threads in any way without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep the streams of unrelated consumers apart.
pub mod tag {
    pub const OMEGA: u64 = 0x006f_6d65_6761;
    pub const SELECT: u64 = 0x7365_6c65_6374;
    pub const SPARSE: u64 = 0x7370_6172_7365;
    pub const DELETE: u64 = 0x6465_6c65_7465;
    pub const REPLICATE: u64 = 0x7265_706c;
    pub const TRUTH: u64 = 0x0074_7275_7468;
    pub const ZETA: u64 = 0x7a65_7461;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a key. Order sensitive.
pub fn key(seed: u64, tag: u64, words: &[u64]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(tag));
    for &w in words {
        h = splitmix(h ^ w.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    // length terminator so that prefixes never collide
    splitmix(h ^ words.len() as u64)
}

/// Key for a subsample, identified by its (0-based, increasing) original indices.
pub fn tuple_key(seed: u64, tag: u64, tuple: &[usize]) -> u64 {
    let mut h = splitmix(seed ^ splitmix(tag));
    for &w in tuple {
        h = splitmix(h ^ (w as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    splitmix(h ^ tuple.len() as u64)
}

/// Uniform draw in [0, 1) from a key, using the top 53 bits.
#[inline]
pub fn unit_uniform(key: u64) -> f64 {
    (key >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng(key: u64) -> StreamRng {
    StreamRng::seed_from_u64(key)
}

pub fn replicate_rng(seed: u64, tag: u64, words: &[u64]) -> StreamRng {
    rng(key(seed, tag, words))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_distinguish_prefixes_and_tags() {
        assert_ne!(key(1, 2, &[3]), key(1, 2, &[3, 0]));
        assert_ne!(key(1, 2, &[3]), key(1, 3, &[3]));
        assert_ne!(
            tuple_key(9, tag::OMEGA, &[0, 1]),
            tuple_key(9, tag::OMEGA, &[1, 0])
        );
        assert_eq!(
            tuple_key(9, tag::OMEGA, &[4, 7]),
            tuple_key(9, tag::OMEGA, &[4, 7])
        );
    }

    #[test]
    fn unit_uniform_is_in_range_and_roughly_flat() {
        let n = 100_000u64;
        let mean: f64 = (0..n).map(|i| unit_uniform(key(5, 0, &[i]))).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
        assert!((0..1000).all(|i| (0.0..1.0).contains(&unit_uniform(key(0, 0, &[i])))));
    }
}
