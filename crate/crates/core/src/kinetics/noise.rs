//! Counter-addressed Gaussian noise.
//!
//! Every sample owns a ChaCha8 stream selected by its index under the
//! master seed. Step `k` always reads the same fixed block of words,
//! so a draw depends only on `(master_seed, sample, step)` and never on
//! which worker touched the sample or in which order.

use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normals available per `(sample, step)` key; enough for the planar
/// phase space `(x, y, u, w)`.
pub const NORMALS_PER_STEP: usize = 4;

// Two 32-bit words per u64, one u64 per normal.
const WORDS_PER_STEP: u128 = 2 * NORMALS_PER_STEP as u128;

pub(crate) struct SampleNoise {
    rng: ChaCha8Rng,
    next_step: u64,
}

impl SampleNoise {
    pub(crate) fn new(master_seed: u64, sample: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(sample);
        Self { rng, next_step: 0 }
    }

    /// The normals keyed by `step`. Sequential steps need no seek.
    pub(crate) fn normals(&mut self, step: u64) -> [f64; NORMALS_PER_STEP] {
        if step != self.next_step {
            self.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        }
        self.next_step = step + 1;
        let mut out = [0.0; NORMALS_PER_STEP];
        for pair in out.chunks_exact_mut(2) {
            let (z0, z1) = box_muller(self.rng.next_u64(), self.rng.next_u64());
            pair[0] = z0;
            pair[1] = z1;
        }
        out
    }
}

/// Standard normal pair from two uniform 64-bit words.
fn box_muller(w0: u64, w1: u64) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1] keeps the logarithm finite.
    let u1 = ((w0 >> 11) + 1) as f64 * SCALE;
    let u2 = (w1 >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (TAU * u2).sin_cos();
    (r * c, r * s)
}
