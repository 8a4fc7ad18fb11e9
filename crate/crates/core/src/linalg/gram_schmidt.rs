use super::{axpy, dot, norm, scale, DenseMatrix, LinalgError, SubspaceBasis};

/// Default residual-norm drop tolerance, stated for inputs scaled to unit
/// maximum row norm. Internally the threshold is multiplied by the largest
/// input row norm, which is equivalent.
pub const DEFAULT_DROP_TOLERANCE: f64 = 1e-10;

/// Orthonormalizes the rows of `input` with modified Gram-Schmidt plus one
/// re-orthogonalization pass (classical GS loses orthogonality at large
/// dimension). Rows whose residual after projection falls below the
/// tolerance are dropped, so `k_effective <= k_requested`.
pub fn gram_schmidt(
    input: &DenseMatrix,
    drop_tolerance: f64,
) -> Result<SubspaceBasis, LinalgError> {
    assert!(drop_tolerance > 0.0, "drop_tolerance must be positive");
    if !input.is_finite() {
        return Err(LinalgError::NonFiniteInput);
    }
    if input.rows() == 0 {
        return Err(LinalgError::AllRowsDegenerate);
    }

    let max_row_norm = (0..input.rows())
        .map(|i| norm(input.row(i)))
        .fold(0.0f64, f64::max);
    if max_row_norm == 0.0 {
        return Err(LinalgError::AllRowsDegenerate);
    }
    let threshold = drop_tolerance * max_row_norm;

    let mut kept: Vec<Vec<f64>> = Vec::new();
    for i in 0..input.rows() {
        let mut v = input.row(i).to_vec();
        // Two passes: the second removes the components reintroduced by
        // rounding in the first.
        for _ in 0..2 {
            for u in &kept {
                let c = dot(&v, u);
                axpy(-c, u, &mut v);
            }
        }
        let n = norm(&v);
        if n > threshold {
            scale(1.0 / n, &mut v);
            kept.push(v);
        }
    }

    if kept.is_empty() {
        return Err(LinalgError::AllRowsDegenerate);
    }
    let vectors = DenseMatrix::from_rows(&kept)?;
    Ok(SubspaceBasis::new(input.rows(), vectors, drop_tolerance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn canonical_two_dim_case() {
        let basis = gram_schmidt(&mat(&[vec![1.0, 0.0], vec![1.0, 1.0]]), 1e-10).unwrap();
        assert_eq!(basis.k_effective(), 2);
        assert_eq!(basis.row(0), &[1.0, 0.0]);
        assert!((basis.row(1)[0]).abs() < 1e-15);
        assert!((basis.row(1)[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_row_normalized() {
        let basis = gram_schmidt(&mat(&[vec![2.0, 0.0, 0.0]]), 1e-10).unwrap();
        assert_eq!(basis.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicated_direction_dropped() {
        let basis = gram_schmidt(&mat(&[vec![1.0, 1.0], vec![2.0, 2.0]]), 1e-10).unwrap();
        assert_eq!(basis.k_requested(), 2);
        assert_eq!(basis.k_effective(), 1);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((basis.row(0)[0] - inv_sqrt2).abs() < 1e-15);
        assert!((basis.row(0)[1] - inv_sqrt2).abs() < 1e-15);
    }

    #[test]
    fn all_zero_rows_degenerate() {
        let err = gram_schmidt(&mat(&[vec![0.0, 0.0], vec![0.0, 0.0]]), 1e-10).unwrap_err();
        assert_eq!(err, LinalgError::AllRowsDegenerate);
    }

    #[test]
    fn non_finite_rejected() {
        let err = gram_schmidt(&mat(&[vec![1.0, f64::NAN]]), 1e-10).unwrap_err();
        assert_eq!(err, LinalgError::NonFiniteInput);
    }

    #[test]
    fn orthonormal_at_scale() {
        use rand::Rng;
        let mut rng = crate::seed::substream(11, "gs-test", 0);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..300).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let basis = gram_schmidt(&mat(&rows), 1e-10).unwrap();
        assert_eq!(basis.k_effective(), 12);
        assert!(basis.orthonormality_defect() <= 1e-10);
    }
}
