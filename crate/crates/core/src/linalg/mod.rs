//! Dense vector/matrix kernels: modified Gram-Schmidt, Gaussian sketching,
//! randomized low-rank row-space approximation, and an exact-SVD oracle used
//! to verify the randomized path.
//!
//! All storage is row-major `f64`. These kernels are pure functions; matrix
//! products use a fixed per-row summation order so results never depend on
//! call context.

mod gram_schmidt;
mod matrix;
mod project;
mod sketch;
mod svd;

pub use gram_schmidt::{gram_schmidt, DEFAULT_DROP_TOLERANCE};
pub use matrix::DenseMatrix;
pub use project::{norm_fraction, project_onto, Projection};
pub use sketch::{randomized_lowrank_approx, SketchMatrix};
pub use svd::exact_topk_basis;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix shape {rows}x{cols} does not match buffer length {len}")]
    InvalidShape { rows: usize, cols: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite entry")]
    NonFiniteInput,
    #[error("every input row dropped below the tolerance")]
    AllRowsDegenerate,
    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,
    #[error("SVD failed to converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
}

/// Row-orthonormal basis for a subspace of `R^dim`.
///
/// `k_effective` may be smaller than `k_requested` when input rows were
/// linearly dependent (their residual fell below `drop_tolerance`).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    k_requested: usize,
    k_effective: usize,
    vectors: DenseMatrix,
    drop_tolerance: f64,
}

impl SubspaceBasis {
    pub(crate) fn new(k_requested: usize, vectors: DenseMatrix, drop_tolerance: f64) -> Self {
        let k_effective = vectors.rows();
        debug_assert!(k_effective <= k_requested);
        SubspaceBasis {
            k_requested,
            k_effective,
            vectors,
            drop_tolerance,
        }
    }

    pub fn k_requested(&self) -> usize {
        self.k_requested
    }

    pub fn k_effective(&self) -> usize {
        self.k_effective
    }

    /// Ambient dimension the basis rows live in.
    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn drop_tolerance(&self) -> f64 {
        self.drop_tolerance
    }

    /// max_{i,j} |v_i . v_j - delta_ij|, the orthonormality defect.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k_effective {
            for j in i..self.k_effective {
                let d = dot(self.row(i), self.row(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
