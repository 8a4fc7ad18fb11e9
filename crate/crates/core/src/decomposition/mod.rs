//! Auxiliary-gradient decomposition and reweighting.
//!
//! Given a subspace spanned by primary-task per-example gradients, the
//! auxiliary gradient splits into three parts: `g_plus` (in-span, sign-agrees
//! with the primary gradient), `g_minus` (in-span, sign-conflicts), and
//! `g_perp` (outside the span, no first-order effect on the primary loss).
//! The surrogate update is `eta_perp*g_perp + eta_plus*g_plus +
//! eta_minus*g_minus`, which reproduces plain multitasking at `(1,1,1)`,
//! primary-only training at `(0,0,0)`, and PCGrad with a one-dimensional
//! basis and `(1,1,0)`.
//!
//! Sign agreement compares projection coefficients coordinate-wise; a zero
//! product counts as agreement (the `>= 0` rule), so ties land in `g_plus`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    axpy, dot, gram_schmidt, norm, norm_fraction, randomized_lowrank_approx, DenseMatrix,
    LinalgError, SubspaceBasis, DEFAULT_DROP_TOLERANCE,
};
use crate::model::ParamMask;
use crate::seed::{derive_seed, substream};

/// Primary gradients with norm at or below this are treated as degenerate:
/// no meaningful sign reference exists and the surrogate passes the
/// auxiliary gradient through unchanged.
pub const DEGENERATE_PRIMARY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("primary gradient is degenerate (norm <= {DEGENERATE_PRIMARY_TOL:e})")]
    DegeneratePrimaryGradient,
    #[error("primary gradient is exactly zero")]
    ZeroPrimary,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Reweighting coefficients for the three components plus the primary
/// gradient's own weight in a combined update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub eta_perp: f64,
    pub eta_plus: f64,
    pub eta_minus: f64,
    #[serde(default)]
    pub eta_prim: f64,
}

impl ControlParams {
    pub fn new(eta_perp: f64, eta_plus: f64, eta_minus: f64, eta_prim: f64) -> Self {
        ControlParams {
            eta_perp,
            eta_plus,
            eta_minus,
            eta_prim,
        }
    }

    /// Aux-only triple with zero primary weight.
    pub fn aux(eta_perp: f64, eta_plus: f64, eta_minus: f64) -> Self {
        Self::new(eta_perp, eta_plus, eta_minus, 0.0)
    }

    /// `(1,1,1)` keeps the auxiliary gradient intact.
    pub fn multitask(eta_prim: f64) -> Self {
        Self::new(1.0, 1.0, 1.0, eta_prim)
    }

    /// `(0,0,0)` with unit primary weight trains on the primary task alone.
    pub fn primary_only() -> Self {
        Self::new(0.0, 0.0, 0.0, 1.0)
    }

    /// The standard preset grid for the auxiliary triple:
    /// `(1,1,-1)`, `(1,1,0)`, `(1,0,-1)`, `(1,0,0)`.
    pub fn preset_grid() -> [ControlParams; 4] {
        [
            Self::aux(1.0, 1.0, -1.0),
            Self::aux(1.0, 1.0, 0.0),
            Self::aux(1.0, 0.0, -1.0),
            Self::aux(1.0, 0.0, 0.0),
        ]
    }

    pub fn with_eta_prim(mut self, eta_prim: f64) -> Self {
        self.eta_prim = eta_prim;
        self
    }

    pub fn aux_triple(&self) -> (f64, f64, f64) {
        (self.eta_perp, self.eta_plus, self.eta_minus)
    }

    pub fn is_finite(&self) -> bool {
        self.eta_perp.is_finite()
            && self.eta_plus.is_finite()
            && self.eta_minus.is_finite()
            && self.eta_prim.is_finite()
    }
}

/// How the decomposition basis is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Sketch of the top singular directions of the Jacobian (the default).
    RandomizedSvd,
    /// k random orthonormal directions, independent of the data.
    Random,
    /// The single direction of the average primary gradient.
    UnitAvgGrad,
    /// Per-parameter basis: coordinate-wise sign comparison, handled without
    /// materializing a D x D matrix.
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisStrategy {
    pub kind: BasisKind,
    pub k: usize,
    pub seed: u64,
}

impl BasisStrategy {
    pub fn randomized_svd(k: usize, seed: u64) -> Self {
        BasisStrategy {
            kind: BasisKind::RandomizedSvd,
            k,
            seed,
        }
    }

    pub fn random(k: usize, seed: u64) -> Self {
        BasisStrategy {
            kind: BasisKind::Random,
            k,
            seed,
        }
    }

    pub fn unit_avg_grad() -> Self {
        BasisStrategy {
            kind: BasisKind::UnitAvgGrad,
            k: 1,
            seed: 0,
        }
    }

    pub fn canonical() -> Self {
        BasisStrategy {
            kind: BasisKind::Canonical,
            k: 0,
            seed: 0,
        }
    }

    /// Same strategy, different sketch seed (used at basis recomputation).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A decomposition basis: either explicit orthonormal rows, or the
/// per-parameter (canonical) marker which spans everything and is applied
/// coordinate-wise.
#[derive(Debug, Clone, PartialEq)]
pub enum DecompBasis {
    Explicit { basis: SubspaceBasis, id: u64 },
    Canonical { dim: usize, id: u64 },
}

impl DecompBasis {
    pub fn dim(&self) -> usize {
        match self {
            DecompBasis::Explicit { basis, .. } => basis.dim(),
            DecompBasis::Canonical { dim, .. } => *dim,
        }
    }

    pub fn k_effective(&self) -> usize {
        match self {
            DecompBasis::Explicit { basis, .. } => basis.k_effective(),
            DecompBasis::Canonical { dim, .. } => *dim,
        }
    }

    pub fn id(&self) -> u64 {
        match self {
            DecompBasis::Explicit { id, .. } | DecompBasis::Canonical { id, .. } => *id,
        }
    }

    /// Fraction of `g`'s squared norm inside the subspace; 1 for canonical,
    /// 0 for a zero vector.
    pub fn capture_fraction(&self, g: &[f64]) -> f64 {
        match self {
            DecompBasis::Canonical { .. } => 1.0,
            DecompBasis::Explicit { basis, .. } => {
                norm_fraction(basis, g).unwrap_or(0.0)
            }
        }
    }
}

/// The split auxiliary gradient and the projection coefficients behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedGradient {
    pub g_plus: Vec<f64>,
    pub g_minus: Vec<f64>,
    pub g_perp: Vec<f64>,
    pub p_prim: Vec<f64>,
    pub p_aux: Vec<f64>,
    pub basis_id: u64,
}

/// Per-decomposition diagnostic record, serialized one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: u64,
    pub k_effective: usize,
    pub norm_fraction_prim: f64,
    pub norm_fraction_aux: f64,
    pub g_plus_norm: f64,
    pub g_minus_norm: f64,
    pub g_perp_norm: f64,
    pub dot_prim: f64,
    pub dot_aux: f64,
    pub degenerate_flag: bool,
}

/// Surrogate gradient plus the diagnostics of the decomposition behind it.
#[derive(Debug, Clone)]
pub struct SurrogateOutput {
    pub surrogate: Vec<f64>,
    pub record: StepDiagnostics,
}

/// First-order impact of an update direction on both tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub dot_prim: f64,
    pub dot_aux: f64,
}

fn basis_tag(kind: BasisKind) -> u64 {
    match kind {
        BasisKind::RandomizedSvd => 1,
        BasisKind::Random => 2,
        BasisKind::UnitAvgGrad => 3,
        BasisKind::Canonical => 4,
    }
}

/// Builds the decomposition basis for a strategy.
///
/// - `randomized_svd`: Gaussian sketch of the Jacobian rows, orthonormalized;
/// - `random`: k seeded Gaussian directions, orthonormalized;
/// - `unit_avg_grad`: the normalized primary gradient (errors when it is
///   degenerate);
/// - `canonical`: a marker handled coordinate-wise by [`decompose`].
pub fn build_basis(
    strategy: &BasisStrategy,
    jacobian: &DenseMatrix,
    g_prim: &[f64],
) -> Result<DecompBasis, DecompositionError> {
    let dim = g_prim.len();
    let id = derive_seed(
        strategy.seed,
        "basis",
        basis_tag(strategy.kind) ^ ((strategy.k as u64) << 3),
    );
    match strategy.kind {
        BasisKind::RandomizedSvd => {
            if jacobian.cols() != dim {
                return Err(DecompositionError::DimensionMismatch {
                    expected: dim,
                    got: jacobian.cols(),
                });
            }
            let basis = randomized_lowrank_approx(jacobian, strategy.k, strategy.seed)?;
            Ok(DecompBasis::Explicit { basis, id })
        }
        BasisKind::Random => {
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = substream(strategy.seed, "random-basis", 0);
            let mut rows = Vec::with_capacity(strategy.k);
            for _ in 0..strategy.k {
                let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                rows.push(row);
            }
            let m = DenseMatrix::from_rows(&rows)?;
            let basis = gram_schmidt(&m, DEFAULT_DROP_TOLERANCE)?;
            Ok(DecompBasis::Explicit { basis, id })
        }
        BasisKind::UnitAvgGrad => {
            let n = norm(g_prim);
            if n <= DEGENERATE_PRIMARY_TOL {
                return Err(DecompositionError::DegeneratePrimaryGradient);
            }
            let row: Vec<f64> = g_prim.iter().map(|x| x / n).collect();
            let m = DenseMatrix::from_rows(&[row])?;
            let basis = SubspaceBasis::new(1, m, DEFAULT_DROP_TOLERANCE);
            Ok(DecompBasis::Explicit { basis, id })
        }
        BasisKind::Canonical => Ok(DecompBasis::Canonical { dim, id }),
    }
}

/// Splits `g_aux` into `(g_plus, g_minus, g_perp)` against the basis, using
/// `g_prim` as the sign reference. Coordinates with a non-negative product
/// of projection coefficients go to the plus part.
pub fn decompose(
    g_aux: &[f64],
    g_prim: &[f64],
    basis: &DecompBasis,
) -> Result<DecomposedGradient, DecompositionError> {
    if g_aux.len() != g_prim.len() {
        return Err(DecompositionError::DimensionMismatch {
            expected: g_prim.len(),
            got: g_aux.len(),
        });
    }
    if g_aux.len() != basis.dim() {
        return Err(DecompositionError::DimensionMismatch {
            expected: basis.dim(),
            got: g_aux.len(),
        });
    }
    match basis {
        DecompBasis::Canonical { .. } => {
            let dim = g_aux.len();
            let mut g_plus = vec![0.0; dim];
            let mut g_minus = vec![0.0; dim];
            for i in 0..dim {
                if g_prim[i] * g_aux[i] >= 0.0 {
                    g_plus[i] = g_aux[i];
                } else {
                    g_minus[i] = g_aux[i];
                }
            }
            Ok(DecomposedGradient {
                g_plus,
                g_minus,
                g_perp: vec![0.0; dim],
                p_prim: g_prim.to_vec(),
                p_aux: g_aux.to_vec(),
                basis_id: basis.id(),
            })
        }
        DecompBasis::Explicit { basis: v, .. } => {
            let k = v.k_effective();
            let p_prim: Vec<f64> = (0..k).map(|i| dot(v.row(i), g_prim)).collect();
            let p_aux: Vec<f64> = (0..k).map(|i| dot(v.row(i), g_aux)).collect();
            let dim = g_aux.len();
            let mut g_plus = vec![0.0; dim];
            let mut g_minus = vec![0.0; dim];
            for i in 0..k {
                if p_prim[i] * p_aux[i] >= 0.0 {
                    axpy(p_aux[i], v.row(i), &mut g_plus);
                } else {
                    axpy(p_aux[i], v.row(i), &mut g_minus);
                }
            }
            let g_perp: Vec<f64> = (0..dim)
                .map(|i| g_aux[i] - g_plus[i] - g_minus[i])
                .collect();
            Ok(DecomposedGradient {
                g_plus,
                g_minus,
                g_perp,
                p_prim,
                p_aux,
                basis_id: basis.id(),
            })
        }
    }
}

/// `eta_perp * g_perp + eta_plus * g_plus + eta_minus * g_minus`.
pub fn reweight(d: &DecomposedGradient, eta: &ControlParams) -> Vec<f64> {
    let dim = d.g_perp.len();
    let mut out = vec![0.0; dim];
    axpy(eta.eta_perp, &d.g_perp, &mut out);
    axpy(eta.eta_plus, &d.g_plus, &mut out);
    axpy(eta.eta_minus, &d.g_minus, &mut out);
    out
}

/// The full surrogate pipeline: build the basis from the Jacobian, decompose
/// the auxiliary gradient against the Jacobian row-mean, reweight — applied
/// on masked coordinates only. Unmasked coordinates pass through
/// bit-identically. A degenerate primary gradient is not an error: the
/// surrogate falls back to `g_aux` and flags the event in the record.
pub fn attittud_surrogate(
    g_aux: &[f64],
    jacobian: &DenseMatrix,
    eta: &ControlParams,
    strategy: &BasisStrategy,
    mask: &ParamMask,
) -> Result<SurrogateOutput, DecompositionError> {
    if jacobian.cols() != g_aux.len() {
        return Err(DecompositionError::DimensionMismatch {
            expected: g_aux.len(),
            got: jacobian.cols(),
        });
    }
    if mask.len() != g_aux.len() {
        return Err(DecompositionError::DimensionMismatch {
            expected: g_aux.len(),
            got: mask.len(),
        });
    }
    let g_prim = jacobian.row_mean();
    let indices = mask.indices();
    if indices.is_empty() {
        let surrogate = g_aux.to_vec();
        let record = passthrough_record(&surrogate, &g_prim, g_aux, false);
        return Ok(SurrogateOutput { surrogate, record });
    }

    let jac_masked = jacobian.select_columns(&indices);
    let gp_masked: Vec<f64> = indices.iter().map(|&i| g_prim[i]).collect();
    let ga_masked: Vec<f64> = indices.iter().map(|&i| g_aux[i]).collect();

    if norm(&gp_masked) <= DEGENERATE_PRIMARY_TOL {
        let surrogate = g_aux.to_vec();
        let record = passthrough_record(&surrogate, &g_prim, g_aux, true);
        return Ok(SurrogateOutput { surrogate, record });
    }

    let basis = build_basis(strategy, &jac_masked, &gp_masked)?;
    let parts = decompose(&ga_masked, &gp_masked, &basis)?;
    let reweighted = reweight(&parts, eta);

    let mut surrogate = g_aux.to_vec();
    for (slot, &i) in indices.iter().enumerate() {
        surrogate[i] = reweighted[slot];
    }

    let check = descent_check(&g_prim, g_aux, &surrogate);
    let record = StepDiagnostics {
        step: 0,
        k_effective: basis.k_effective(),
        norm_fraction_prim: basis.capture_fraction(&gp_masked),
        norm_fraction_aux: basis.capture_fraction(&ga_masked),
        g_plus_norm: norm(&parts.g_plus),
        g_minus_norm: norm(&parts.g_minus),
        g_perp_norm: norm(&parts.g_perp),
        dot_prim: check.dot_prim,
        dot_aux: check.dot_aux,
        degenerate_flag: false,
    };
    Ok(SurrogateOutput { surrogate, record })
}

fn passthrough_record(
    surrogate: &[f64],
    g_prim: &[f64],
    g_aux: &[f64],
    degenerate: bool,
) -> StepDiagnostics {
    let check = descent_check(g_prim, g_aux, surrogate);
    StepDiagnostics {
        step: 0,
        k_effective: 0,
        norm_fraction_prim: 0.0,
        norm_fraction_aux: 0.0,
        g_plus_norm: 0.0,
        g_minus_norm: 0.0,
        g_perp_norm: 0.0,
        dot_prim: check.dot_prim,
        dot_aux: check.dot_aux,
        degenerate_flag: degenerate,
    }
}

/// Reference PCGrad projection: when the two gradients conflict, remove the
/// component of `g_aux` along `g_prim`; otherwise return `g_aux` unchanged.
pub fn pcgrad_reference(g_aux: &[f64], g_prim: &[f64]) -> Result<Vec<f64>, DecompositionError> {
    if g_aux.len() != g_prim.len() {
        return Err(DecompositionError::DimensionMismatch {
            expected: g_prim.len(),
            got: g_aux.len(),
        });
    }
    let prim_sq = dot(g_prim, g_prim);
    if prim_sq == 0.0 {
        return Err(DecompositionError::ZeroPrimary);
    }
    let agreement = dot(g_aux, g_prim);
    let mut out = g_aux.to_vec();
    if agreement < 0.0 {
        axpy(-agreement / prim_sq, g_prim, &mut out);
    }
    Ok(out)
}

/// Dot products of a surrogate direction with both task gradients (the
/// first-order do-no-harm measurements).
pub fn descent_check(g_prim: &[f64], g_aux: &[f64], surrogate: &[f64]) -> DescentReport {
    DescentReport {
        dot_prim: dot(surrogate, g_prim),
        dot_aux: dot(surrogate, g_aux),
    }
}

#[cfg(test)]
mod tests;
