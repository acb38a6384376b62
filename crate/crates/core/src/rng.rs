//! Reproducible random streams.
//!
//! Every array draw is keyed by `(seed, array id, flat index)`: the ChaCha8
//! block counter is positioned at `4 * index` words and two 64-bit words are
//! turned into one standard normal by Box-Muller. The value at an index does
//! not depend on how many other values were generated before it, so arrays
//! can be filled in parallel with identical results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const WORDS_PER_DRAW: u128 = 4;
const PAR_CHUNK: usize = 4096;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of sub-task `index` from a master seed.
///
/// `derive_seed(master, i) = mix64(mix64(master) ^ mix64(i + 0x9e3779b97f4a7c15))`.
/// Sub-task seeds only depend on their own index, so appending tasks never
/// changes the seeds of existing ones.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// A keyed stream of standard normal variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalStream {
    seed: u64,
    stream: u64,
}

impl NormalStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    fn generator(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(index as u128 * WORDS_PER_DRAW);
        rng
    }

    /// The draw at `index`.
    pub fn at(&self, index: u64) -> f64 {
        box_muller(&mut self.generator(index))
    }

    /// Fill `out` with draws `start, start + 1, ...`.
    pub fn fill_from(&self, start: u64, out: &mut [f64]) {
        let mut rng = self.generator(start);
        for v in out.iter_mut() {
            *v = box_muller(&mut rng);
        }
    }

    /// Fill `out` with draws `0..out.len()`, in parallel chunks.
    pub fn fill(&self, out: &mut [f64]) {
        out.par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| self.fill_from((c * PAR_CHUNK) as u64, chunk));
    }
}

fn box_muller<R: RngCore>(rng: &mut R) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A seeded general-purpose generator for Monte Carlo trial `index`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}
