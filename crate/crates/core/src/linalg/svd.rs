use super::{dot, norm, scale, DenseMatrix, LinalgError, SubspaceBasis};

const MAX_SWEEPS: usize = 1000;
const JACOBI_TOL: f64 = 1e-12;

// Singular values at or below this fraction of the largest are treated as
// numerically zero and their vectors dropped.
const SIGMA_FLOOR: f64 = 1e-10;

/// Top-k right singular vectors of `j`, computed with one-sided Jacobi
/// rotations applied to the rows. Verification oracle: robust and
/// deterministic, not fast. Requires `k <= min(rows, cols)`.
///
/// Ties between singular values resolve by first occurrence in the final
/// (cyclic, deterministic) rotation order.
pub fn exact_topk_basis(j: &DenseMatrix, k: usize) -> Result<SubspaceBasis, LinalgError> {
    let m = j.rows();
    assert!(k >= 1 && k <= m.min(j.cols()), "k out of range");
    if !j.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }

    // One-sided Jacobi: rotate row pairs of A until all pairs are orthogonal.
    // Then A = diag(sigma) * V^T up to row order, i.e. the normalized rows
    // are right singular vectors and the row norms the singular values.
    let mut a = j.clone();
    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let (alpha, beta, gamma) = {
                    let rp = a.row(p);
                    let rq = a.row(q);
                    (dot(rp, rp), dot(rq, rq), dot(rp, rq))
                };
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for idx in 0..a.cols() {
                    let vp = a.get(p, idx);
                    let vq = a.get(q, idx);
                    a.set(p, idx, c * vp - s * vq);
                    a.set(q, idx, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::ConvergenceFailure { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<(usize, f64)> = (0..m).map(|i| (i, norm(a.row(i)))).collect();
    order.sort_by(|x, y| y.1.partial_cmp(&x.1).expect("finite norms"));

    let sigma_max = order.first().map_or(0.0, |&(_, s)| s);
    if sigma_max == 0.0 {
        return Err(LinalgError::AllRowsDegenerate);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &(i, sigma) in order.iter().take(k) {
        if sigma <= SIGMA_FLOOR * sigma_max {
            break;
        }
        let mut v = a.row(i).to_vec();
        scale(1.0 / sigma, &mut v);
        rows.push(v);
    }
    if rows.is_empty() {
        return Err(LinalgError::AllRowsDegenerate);
    }
    let vectors = DenseMatrix::from_rows(&rows)?;
    Ok(SubspaceBasis::new(k, vectors, SIGMA_FLOOR))
}
