use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit run seed. Same seed, configuration and duration give
/// bit-identical results.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(subseed(self.0, index))
    }
}

impl From<u64> for RngSeed {
    fn from(s: u64) -> Self { Self(s) }
}

/// SplitMix64 finalizer over (seed, index).
pub fn subseed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
