//! Deterministic point sets on the sphere.
//!
//! Two generators are provided: a Fibonacci lattice for quadrature and a
//! seeded uniform sampler (Marsaglia's rejection method) for Monte Carlo.
//! Monte Carlo work is split into fixed-size chunks, each driven by its own
//! sub-seed, so results do not depend on how many threads run the chunks.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::sphere::UnitVector;

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 42;

const CHUNK: usize = 1 << 16;

/// `n` nearly evenly spread points (spherical Fibonacci lattice).
pub fn fibonacci_lattice(n: usize) -> Vec<UnitVector> {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            UnitVector::normalized(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// SplitMix64 finalizer, used to derive independent chunk seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One uniform point on S² by Marsaglia's method.
pub fn uniform_point<R: RngExt>(rng: &mut R) -> UnitVector {
    loop {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let s = u * u + v * v;
        if s < 1.0 && s > 0.0 {
            let f = 2.0 * (1.0 - s).sqrt();
            return UnitVector::normalized(u * f, v * f, 1.0 - 2.0 * s);
        }
    }
}

/// Seeded uniform sampler on the sphere.
#[derive(Debug, Clone, Copy)]
pub struct SphereSampler {
    seed: u64,
}

impl SphereSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn chunk_points(&self, chunk: usize, len: usize) -> Vec<UnitVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, chunk as u64));
        (0..len).map(|_| uniform_point(&mut rng)).collect()
    }

    fn chunks(n: usize) -> impl ParallelIterator<Item = (usize, usize)> {
        let count = n.div_ceil(CHUNK);
        (0..count)
            .into_par_iter()
            .map(move |c| (c, CHUNK.min(n - c * CHUNK)))
    }

    /// The first `n` points of this sampler's stream.
    pub fn points(&self, n: usize) -> Vec<UnitVector> {
        let parts: Vec<Vec<UnitVector>> = Self::chunks(n)
            .map(|(c, len)| self.chunk_points(c, len))
            .collect();
        parts.concat()
    }

    /// Number of the first `n` stream points satisfying `pred`.
    pub fn count<F>(&self, n: usize, pred: F) -> usize
    where
        F: Fn(&UnitVector) -> bool + Sync,
    {
        Self::chunks(n)
            .map(|(c, len)| self.chunk_points(c, len).iter().filter(|p| pred(p)).count())
            .sum()
    }

    /// Monte Carlo estimate of σ({p : pred(p)}).
    pub fn probability<F>(&self, n: usize, pred: F) -> McEstimate
    where
        F: Fn(&UnitVector) -> bool + Sync,
    {
        McEstimate::from_count(self.count(n, pred), n)
    }
}

impl Default for SphereSampler {
    fn default() -> Self {
        Self::new(DEFAULT_SEED)
    }
}

/// A Monte Carlo probability estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl McEstimate {
    pub fn from_count(hits: usize, samples: usize) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }

    /// Whether `exact` lies within `k` standard errors of the estimate.
    ///
    /// A floor of one sample's worth of probability keeps the test meaningful
    /// when the estimate is 0 or 1.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        let se = self.std_error.max(1.0 / self.samples as f64);
        (self.value - exact).abs() <= k * se
    }
}
