//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha20 stream cipher generator
//! (a counter-based generator: 256-bit key from the seed, 64-bit block
//! counter). Seeds are expanded to keys with `SeedableRng::seed_from_u64`.
//! Independent sub-streams are obtained by hashing `(seed, stream)` with
//! SplitMix64 so that rows, folds and stages never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SbiRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> SbiRng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `stream` from a parent seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Named stream offsets used across the pipeline.
pub mod streams {
    pub const PRIOR: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const DISTRACTORS: u64 = 3;
    pub const CONTEXT: u64 = 4;
    pub const SURROGATE: u64 = 5;
    pub const FLOW_INIT: u64 = 6;
    pub const SUMMARY_INIT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const SAMPLE: u64 = 9;
    pub const C2ST: u64 = 10;
    pub const REFERENCE: u64 = 11;
    pub const PROBE: u64 = 12;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = rng_from_seed(derive_seed(3, 1)).random();
        let b: u64 = rng_from_seed(derive_seed(3, 1)).random();
        let c: u64 = rng_from_seed(derive_seed(3, 2)).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
    }
}
