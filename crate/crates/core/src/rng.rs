//! Counter-based normal variates.
//!
//! Every draw is addressed by `(seed, stream, position)`: the ChaCha8 key
//! comes from the seed, the stream id is the path index, and the block
//! counter is derived from the step. Each step consumes a fixed number of
//! words, so path `i`'s increments never depend on which worker generated
//! it or in what order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Normal variate generator for one stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        StreamRng { inner, spare: None }
    }

    /// Generator positioned at the start of `step`, where every step draws
    /// `normals_per_step` variates.
    pub fn at_step(seed: u64, stream: u64, step: u64, normals_per_step: usize) -> Self {
        let mut rng = StreamRng::new(seed, stream);
        rng.seek_step(step, normals_per_step);
        rng
    }

    /// Words (32-bit) consumed per step with `normals_per_step` variates.
    fn words_per_step(normals_per_step: usize) -> u128 {
        // one Box-Muller pair = two u64 draws = four words
        4 * normals_per_step.div_ceil(2) as u128
    }

    pub fn seek_step(&mut self, step: u64, normals_per_step: usize) {
        self.inner
            .set_word_pos(step as u128 * Self::words_per_step(normals_per_step));
        self.spare = None;
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) + 1) as f64 * INV_2_53
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Two independent standard normals (Box–Muller).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills one step's worth of standard normals. Odd counts discard the
    /// second variate of the last pair so each step consumes a fixed number
    /// of words.
    pub fn fill_step(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let (a, b) = self.normal_pair();
            chunk[0] = a;
            if chunk.len() > 1 {
                chunk[1] = b;
            }
        }
        self.spare = None;
    }

    /// A single normal, pairing variates across calls.
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let (a, b) = self.normal_pair();
        self.spare = Some(b);
        a
    }
}
