//! Mergeable sample moments and a deterministic chunked parallel reduction.
//!
//! Paths are processed in fixed chunks of [`CHUNK`] indices. Each chunk is
//! folded sequentially and the chunk results are merged in index order, so
//! every estimate is bitwise independent of the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

pub const CHUNK: usize = 1024;

/// Running mean and sum of squared deviations (Welford, merged with Chan's rule).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        if delta != 0.0 {
            self.mean += delta * nb / n;
        }
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Coordinate-wise [`Moments`] of vector samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VecMoments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VecMoments {
    pub fn new(len: usize) -> Self {
        VecMoments {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    /// Adds `scale · x`.
    pub fn push_scaled(&mut self, scale: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let v = scale * v;
            let delta = v - *m;
            *m += delta * inv;
            *s += delta * (v - *m);
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.push_scaled(1.0, x);
    }

    pub fn merge(&mut self, other: &VecMoments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            if delta != 0.0 {
                self.mean[i] += delta * nb / n;
            }
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|m2| {
                if self.n < 2 {
                    0.0
                } else {
                    (m2 / (n - 1.0) / n).max(0.0).sqrt()
                }
            })
            .collect()
    }
}

/// Folds `0..n` in chunks of [`CHUNK`] on the rayon pool and merges the chunk
/// accumulators in index order.
pub fn reduce_indices<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut iter = parts.into_iter();
    let mut acc = iter.next().unwrap_or_else(&init);
    for part in iter {
        merge(&mut acc, part);
    }
    acc
}
