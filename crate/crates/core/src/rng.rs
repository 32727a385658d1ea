//! Seeded random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The pair is mixed with
//! SplitMix64 into a 256-bit key for a ChaCha8 generator, which is
//! counter-based: two streams never share state and every stream can be
//! reproduced from its identifiers alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream id reserved for generating synthetic datasets.
pub const DATA_STREAM: u64 = u64::MAX;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the 256-bit generator key for `(master_seed, stream_id)`.
pub fn stream_key(master_seed: u64, stream_id: u64) -> [u8; 32] {
    let mut state = master_seed;
    let _ = splitmix64(&mut state);
    state ^= stream_id.wrapping_mul(0xD605_BBB5_8C8A_BBFD);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Single-owner random stream.
#[derive(Debug, Clone)]
pub struct RandomSource {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
            rng: ChaCha8Rng::from_seed(stream_key(master_seed, stream_id)),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.rng);
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
