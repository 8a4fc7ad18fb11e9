use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{gram_schmidt, DenseMatrix, LinalgError, SubspaceBasis, DEFAULT_DROP_TOLERANCE};

/// A `k x m` matrix of i.i.d. standard normal entries drawn from a seeded
/// ChaCha8 stream. Regenerating with the same seed reproduces the entries
/// bit-exactly on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    k: usize,
    m: usize,
    entries: DenseMatrix,
    seed: u64,
}

impl SketchMatrix {
    pub fn generate(k: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..k * m)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        SketchMatrix {
            k,
            m,
            entries: DenseMatrix::new(k, m, data).expect("k*m entries"),
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &DenseMatrix {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }
}

/// Approximates the dominant row space of `j` without forming its SVD:
/// sketch `C = Pi * J` with a seeded Gaussian `Pi`, then orthonormalize the
/// rows of `C`. Deterministic given `(j, k, seed)`.
pub fn randomized_lowrank_approx(
    j: &DenseMatrix,
    k: usize,
    seed: u64,
) -> Result<SubspaceBasis, LinalgError> {
    assert!(k >= 1, "subspace size must be at least 1");
    let sketch = SketchMatrix::generate(k, j.rows(), seed);
    let c = sketch.entries().matmul(j)?;
    gram_schmidt(&c, DEFAULT_DROP_TOLERANCE)
}
