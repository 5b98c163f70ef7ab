//! Fixed inputs shared by the benchmarks.

use gauss_ot::body::random_polytope;
use gauss_ot::sampling::uniform_point;
use gauss_ot::{DiscreteMeasure, UnitVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Curvature measure of a random polytope with about `vertices` vertices.
pub fn polytope_measure(vertices: usize) -> DiscreteMeasure {
    random_polytope(vertices as u64, vertices, 0.5, 1.5)
        .curvature_measure()
        .expect("random polytopes contain the origin")
}

/// `n` random sites with weights in `[-0.3, 0.3]`.
pub fn weighted_sites(n: usize, seed: u64) -> (Vec<UnitVector>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = (0..n).map(|_| uniform_point(&mut rng)).collect();
    let weights = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
    (sites, weights)
}
