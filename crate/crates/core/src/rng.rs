//! Counter-based random streams.
//!
//! Each unit of sampling work derives its own generator from
//! `(seed, instance, permutation, step)`, so draws never depend on which
//! worker executes them or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub instance: u64,
    pub permutation: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, instance: u64, permutation: u64, step: u64) -> Self {
        Self {
            seed,
            instance,
            permutation,
            step,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut h = splitmix(self.seed);
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.instance, self.permutation, self.step, 0x006f_7376])
        {
            h = splitmix(h ^ word);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
