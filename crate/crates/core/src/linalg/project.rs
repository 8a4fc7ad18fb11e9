use super::{axpy, dot, LinalgError, SubspaceBasis};

/// Result of projecting a vector onto a subspace: `g = in_span + residual`,
/// with `in_span = V^T coefficients` and `coefficients = V g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    pub in_span: Vec<f64>,
    pub residual: Vec<f64>,
}

pub fn project_onto(basis: &SubspaceBasis, g: &[f64]) -> Result<Projection, LinalgError> {
    if g.len() != basis.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: basis.dim(),
            got: g.len(),
        });
    }
    let coefficients: Vec<f64> = (0..basis.k_effective())
        .map(|i| dot(basis.row(i), g))
        .collect();
    let mut in_span = vec![0.0; g.len()];
    for (i, &c) in coefficients.iter().enumerate() {
        axpy(c, basis.row(i), &mut in_span);
    }
    let residual: Vec<f64> = g.iter().zip(&in_span).map(|(gi, si)| gi - si).collect();
    Ok(Projection {
        coefficients,
        in_span,
        residual,
    })
}

/// Fraction of `g`'s squared norm captured by the subspace, clamped to
/// `[0, 1]`. For a row-orthonormal basis this equals
/// `|coefficients|^2 / |g|^2`.
pub fn norm_fraction(basis: &SubspaceBasis, g: &[f64]) -> Result<f64, LinalgError> {
    if g.len() != basis.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: basis.dim(),
            got: g.len(),
        });
    }
    let g_sq = dot(g, g);
    if g_sq == 0.0 {
        return Err(LinalgError::ZeroVector);
    }
    let captured: f64 = (0..basis.k_effective())
        .map(|i| {
            let c = dot(basis.row(i), g);
            c * c
        })
        .sum();
    Ok((captured / g_sq).clamp(0.0, 1.0))
}
