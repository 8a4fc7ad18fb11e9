use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::linalg::norm;
use crate::model::{LayoutEntry, ParamLayout, ParamMask};

fn explicit_basis(rows: &[Vec<f64>]) -> DecompBasis {
    let m = DenseMatrix::from_rows(rows).unwrap();
    let basis = gram_schmidt(&m, 1e-10).unwrap();
    DecompBasis::Explicit { basis, id: 0 }
}

fn flat_layout(dim: usize) -> ParamLayout {
    ParamLayout::from_entries(vec![LayoutEntry {
        name: "all".into(),
        rows: dim,
        cols: 1,
        offset: 0,
    }])
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn hand_worked_split_in_r3() {
    // Basis {e1, e2}; the first coordinate agrees, the second conflicts,
    // the third is out of span.
    let basis = explicit_basis(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    let g_prim = [1.0, 1.0, 0.0];
    let g_aux = [2.0, -3.0, 5.0];
    let d = decompose(&g_aux, &g_prim, &basis).unwrap();
    assert!(max_abs_diff(&d.g_plus, &[2.0, 0.0, 0.0]) < 1e-15);
    assert!(max_abs_diff(&d.g_minus, &[0.0, -3.0, 0.0]) < 1e-15);
    assert!(max_abs_diff(&d.g_perp, &[0.0, 0.0, 5.0]) < 1e-15);

    // Flipping the conflicting component turns (2,-3,5) into (2,3,5).
    let flipped = reweight(&d, &ControlParams::aux(1.0, 1.0, -1.0));
    assert!(max_abs_diff(&flipped, &[2.0, 3.0, 5.0]) < 1e-15);

    // (1,1,1) reconstructs the input; (0,0,0) zeroes it.
    let rebuilt = reweight(&d, &ControlParams::aux(1.0, 1.0, 1.0));
    assert!(max_abs_diff(&rebuilt, &g_aux) < 1e-15);
    let zero = reweight(&d, &ControlParams::aux(0.0, 0.0, 0.0));
    assert!(zero.iter().all(|&v| v == 0.0));
}

#[test]
fn orthogonal_aux_goes_entirely_to_perp() {
    let basis = explicit_basis(&[vec![1.0, 0.0, 0.0]]);
    let g_prim = [2.0, 0.0, 0.0];
    let g_aux = [0.0, 4.0, -1.0];
    let d = decompose(&g_aux, &g_prim, &basis).unwrap();
    assert!(norm(&d.g_plus) < 1e-15);
    assert!(norm(&d.g_minus) < 1e-15);
    assert!(max_abs_diff(&d.g_perp, &g_aux) < 1e-15);
}

#[test]
fn aligned_in_span_aux_is_all_plus() {
    let basis = explicit_basis(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let g = [3.0, -1.0];
    let d = decompose(&g, &g, &basis).unwrap();
    assert!(max_abs_diff(&d.g_plus, &g) < 1e-14);
    assert!(norm(&d.g_minus) < 1e-14);
    assert!(norm(&d.g_perp) < 1e-14);
}

#[test]
fn zero_coefficient_product_counts_as_agreement() {
    let basis = explicit_basis(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    // p_prim = (1, 0): the second coordinate has zero product and must land
    // in the plus part.
    let d = decompose(&[0.5, -2.0], &[1.0, 0.0], &basis).unwrap();
    assert_eq!(d.g_plus, vec![0.5, -2.0]);
    assert_eq!(d.g_minus, vec![0.0, 0.0]);
}

#[test]
fn canonical_split_is_coordinatewise() {
    let basis = DecompBasis::Canonical { dim: 4, id: 0 };
    let g_prim = [1.0, -1.0, 0.0, 2.0];
    let g_aux = [3.0, 5.0, -2.0, -4.0];
    let d = decompose(&g_aux, &g_prim, &basis).unwrap();
    assert_eq!(d.g_plus, vec![3.0, 0.0, -2.0, 0.0]); // zero product agrees
    assert_eq!(d.g_minus, vec![0.0, 5.0, 0.0, -4.0]);
    assert!(d.g_perp.iter().all(|&v| v == 0.0));
}

#[test]
fn unit_avg_grad_basis_is_normalized_primary() {
    let j = DenseMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
    let b = build_basis(&BasisStrategy::unit_avg_grad(), &j, &[3.0, 4.0]).unwrap();
    match b {
        DecompBasis::Explicit { basis, .. } => {
            assert!(max_abs_diff(basis.row(0), &[0.6, 0.8]) < 1e-15);
        }
        DecompBasis::Canonical { .. } => panic!("expected explicit basis"),
    }
}

#[test]
fn unit_avg_grad_rejects_degenerate_primary() {
    let j = DenseMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let err = build_basis(&BasisStrategy::unit_avg_grad(), &j, &[0.0, 0.0]).unwrap_err();
    assert_eq!(err, DecompositionError::DegeneratePrimaryGradient);
}

#[test]
fn randomized_svd_on_rank_one_jacobian() {
    let g = vec![1.0, -2.0, 2.0];
    let rows: Vec<Vec<f64>> = (0..4).map(|_| g.clone()).collect();
    let j = DenseMatrix::from_rows(&rows).unwrap();
    let b = build_basis(&BasisStrategy::randomized_svd(3, 9), &j, &g).unwrap();
    assert_eq!(b.k_effective(), 1);
    let d = decompose(&g, &g, &b).unwrap();
    assert!(norm(&d.g_perp) < 1e-10 * norm(&g));
}

#[test]
fn random_basis_is_seed_deterministic() {
    let j = DenseMatrix::zeros(1, 8);
    let g = vec![1.0; 8];
    let a = build_basis(&BasisStrategy::random(3, 77), &j, &g).unwrap();
    let b = build_basis(&BasisStrategy::random(3, 77), &j, &g).unwrap();
    match (&a, &b) {
        (DecompBasis::Explicit { basis: x, .. }, DecompBasis::Explicit { basis: y, .. }) => {
            assert_eq!(x.vectors().data(), y.vectors().data());
        }
        _ => panic!("expected explicit bases"),
    }
}

#[test]
fn pcgrad_hand_values() {
    let out = pcgrad_reference(&[-1.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!(max_abs_diff(&out, &[0.0, 1.0]) < 1e-15);

    // Agreement leaves the gradient alone.
    let g_aux = [0.5, 0.25];
    let out = pcgrad_reference(&g_aux, &[1.0, 0.0]).unwrap();
    assert_eq!(out, g_aux.to_vec());

    // Exactly opposed gradients cancel.
    let out = pcgrad_reference(&[-2.0, -4.0], &[2.0, 4.0]).unwrap();
    assert!(norm(&out) < 1e-14);

    assert_eq!(
        pcgrad_reference(&[1.0], &[0.0]).unwrap_err(),
        DecompositionError::ZeroPrimary
    );
}

#[test]
fn descent_check_zero_surrogate() {
    let r = descent_check(&[1.0, 2.0], &[3.0, 4.0], &[0.0, 0.0]);
    assert_eq!(r.dot_prim, 0.0);
    assert_eq!(r.dot_aux, 0.0);
}

#[test]
fn surrogate_pass_through_cases() {
    let dim = 6;
    let layout = flat_layout(dim);
    let mut rng = crate::seed::substream(31, "surrogate-test", 0);
    let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let j = DenseMatrix::from_rows(&rows).unwrap();

    // Full mask with (1,1,1) reconstructs g_aux.
    let out = attittud_surrogate(
        &g_aux,
        &j,
        &ControlParams::aux(1.0, 1.0, 1.0),
        &BasisStrategy::randomized_svd(4, 3),
        &ParamMask::all(&layout),
    )
    .unwrap();
    assert!(max_abs_diff(&out.surrogate, &g_aux) <= 1e-10 * norm(&g_aux));
    assert!(!out.record.degenerate_flag);

    // Empty mask passes through bit-identically regardless of eta.
    let out = attittud_surrogate(
        &g_aux,
        &j,
        &ControlParams::aux(0.0, -3.0, 7.0),
        &BasisStrategy::randomized_svd(4, 3),
        &ParamMask::none(&layout),
    )
    .unwrap();
    assert_eq!(out.surrogate, g_aux);
    assert_eq!(out.record.k_effective, 0);
}

#[test]
fn surrogate_matches_manual_pipeline() {
    let dim = 10;
    let layout = flat_layout(dim);
    let mut rng = crate::seed::substream(37, "surrogate-test", 1);
    let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let j = DenseMatrix::from_rows(&rows).unwrap();
    let eta = ControlParams::aux(0.7, 1.3, -0.5);
    let strategy = BasisStrategy::randomized_svd(3, 11);

    let out = attittud_surrogate(&g_aux, &j, &eta, &strategy, &ParamMask::all(&layout)).unwrap();

    let g_prim = j.row_mean();
    let basis = build_basis(&strategy, &j, &g_prim).unwrap();
    let parts = decompose(&g_aux, &g_prim, &basis).unwrap();
    let manual = reweight(&parts, &eta);
    assert_eq!(out.surrogate, manual);
}

#[test]
fn surrogate_flags_degenerate_primary() {
    let dim = 4;
    let layout = flat_layout(dim);
    let j = DenseMatrix::zeros(3, dim);
    let g_aux = vec![1.0, -2.0, 3.0, 0.5];
    let out = attittud_surrogate(
        &g_aux,
        &j,
        &ControlParams::aux(1.0, 0.0, -1.0),
        &BasisStrategy::randomized_svd(2, 5),
        &ParamMask::all(&layout),
    )
    .unwrap();
    assert_eq!(out.surrogate, g_aux);
    assert!(out.record.degenerate_flag);
}

#[test]
fn mask_restricts_decomposition_to_masked_block() {
    // Two layers; only the first is decomposed. Outside-mask coordinates
    // must be bit-identical to the input.
    let layout = ParamLayout::from_entries(vec![
        LayoutEntry {
            name: "a".into(),
            rows: 3,
            cols: 1,
            offset: 0,
        },
        LayoutEntry {
            name: "b".into(),
            rows: 3,
            cols: 1,
            offset: 3,
        },
    ]);
    let mask = ParamMask::from_layer_filter(&layout, |n| n == "a");
    let mut rng = crate::seed::substream(41, "surrogate-test", 2);
    let g_aux: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 0.5).collect();
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..6).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let j = DenseMatrix::from_rows(&rows).unwrap();
    let out = attittud_surrogate(
        &g_aux,
        &j,
        &ControlParams::aux(0.0, 0.0, 0.0),
        &BasisStrategy::randomized_svd(2, 5),
        &ParamMask::all(&layout),
    )
    .unwrap();
    // Sanity: a full mask with zero eta zeroes everything.
    assert!(out.surrogate.iter().all(|&v| v == 0.0));

    let out = attittud_surrogate(
        &g_aux,
        &j,
        &ControlParams::aux(0.0, 0.0, 0.0),
        &BasisStrategy::randomized_svd(2, 5),
        &mask,
    )
    .unwrap();
    assert!(out.surrogate[..3].iter().all(|&v| v == 0.0));
    assert_eq!(&out.surrogate[3..], &g_aux[3..]);
}

#[test]
fn pcgrad_equivalence_with_unit_basis() {
    // unit_avg_grad + (1,1,0) must reproduce the reference projection.
    let mut rng = crate::seed::substream(43, "pcgrad-equiv", 0);
    let mut checked = 0usize;
    for case in 0..1000 {
        let dim = 2 + (case % 49);
        let g_prim: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if norm(&g_prim) <= 1e-6 {
            continue;
        }
        let layout = flat_layout(dim);
        let j = DenseMatrix::from_rows(&[g_prim.clone()]).unwrap();
        let out = attittud_surrogate(
            &g_aux,
            &j,
            &ControlParams::aux(1.0, 1.0, 0.0),
            &BasisStrategy::unit_avg_grad(),
            &ParamMask::all(&layout),
        )
        .unwrap();
        let reference = pcgrad_reference(&g_aux, &g_prim).unwrap();
        let scale = norm(&g_aux).max(1e-12);
        assert!(
            max_abs_diff(&out.surrogate, &reference) <= 1e-8 * scale,
            "case {case}"
        );
        checked += 1;
    }
    assert!(checked >= 990);
}

#[test]
fn first_order_no_harm_with_full_span_basis() {
    // With eta_minus = 0 and a basis spanning all per-example gradients,
    // the surrogate must not oppose either task's gradient to first order.
    let mut rng = crate::seed::substream(47, "no-harm", 0);
    let etas = [
        ControlParams::aux(1.0, 1.0, 0.0),
        ControlParams::aux(1.0, 0.0, 0.0),
        ControlParams::aux(0.0, 1.0, 0.0),
        ControlParams::aux(0.5, 2.0, 0.0),
    ];
    for case in 0..1000 {
        let dim = 5 + (case % 20);
        let m = 3;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let j = DenseMatrix::from_rows(&rows).unwrap();
        let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let layout = flat_layout(dim);
        let eta = etas[case % etas.len()];
        // k >= m so the sketch spans the whole Jacobian row space.
        let out = attittud_surrogate(
            &g_aux,
            &j,
            &eta,
            &BasisStrategy::randomized_svd(m, case as u64),
            &ParamMask::all(&layout),
        )
        .unwrap();
        let g_prim = j.row_mean();
        let r = descent_check(&g_prim, &g_aux, &out.surrogate);
        let scale = norm(&g_aux) * norm(&g_prim);
        assert!(r.dot_prim >= -1e-8 * scale.max(1.0), "case {case}: {}", r.dot_prim);
        let aux_scale = norm(&g_aux) * norm(&g_aux);
        assert!(r.dot_aux >= -1e-8 * aux_scale.max(1.0), "case {case}: {}", r.dot_aux);
    }
}

#[test]
fn flip_preset_keeps_primary_descent() {
    // (1,0,-1) may hurt the auxiliary task but never the primary one.
    let mut rng = crate::seed::substream(53, "flip", 0);
    for case in 0..1000 {
        let dim = 4 + (case % 12);
        let m = 3;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let j = DenseMatrix::from_rows(&rows).unwrap();
        let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let layout = flat_layout(dim);
        let out = attittud_surrogate(
            &g_aux,
            &j,
            &ControlParams::aux(1.0, 0.0, -1.0),
            &BasisStrategy::randomized_svd(m, case as u64 + 7),
            &ParamMask::all(&layout),
        )
        .unwrap();
        let g_prim = j.row_mean();
        let r = descent_check(&g_prim, &g_aux, &out.surrogate);
        let scale = (norm(&g_aux) * norm(&g_prim)).max(1.0);
        assert!(r.dot_prim >= -1e-8 * scale, "case {case}: {}", r.dot_prim);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruction_and_orthogonality(
        seed in 0u64..10_000,
        dim in 3usize..40,
        m in 1usize..8,
        k in 1usize..6,
    ) {
        let mut rng = crate::seed::substream(seed, "prop", 0);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let j = DenseMatrix::from_rows(&rows).unwrap();
        let g_prim = j.row_mean();
        let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        prop_assume!(norm(&g_prim) > 1e-9);

        let basis = build_basis(&BasisStrategy::randomized_svd(k, seed), &j, &g_prim).unwrap();
        let d = decompose(&g_aux, &g_prim, &basis).unwrap();
        let aux_norm = norm(&g_aux).max(1e-12);

        // g_plus + g_minus + g_perp == g_aux
        let rebuilt = reweight(&d, &ControlParams::aux(1.0, 1.0, 1.0));
        prop_assert!(max_abs_diff(&rebuilt, &g_aux) <= 1e-10 * aux_norm);

        // Disjoint coefficient supports make the in-span parts exactly
        // orthogonal; the perp part is orthogonal up to rounding.
        let plus_minus = dot(&d.g_plus, &d.g_minus).abs();
        prop_assert!(plus_minus <= 1e-10 * aux_norm * aux_norm);
        prop_assert!(dot(&d.g_perp, &d.g_plus).abs() <= 1e-8 * aux_norm * aux_norm);
        prop_assert!(dot(&d.g_perp, &d.g_minus).abs() <= 1e-8 * aux_norm * aux_norm);

        // Sign properties against the primary gradient.
        let plus_scale = (norm(&d.g_plus) * norm(&g_prim)).max(1e-12);
        prop_assert!(dot(&d.g_plus, &g_prim) >= -1e-8 * plus_scale);
        let minus_scale = (norm(&d.g_minus) * norm(&g_prim)).max(1e-12);
        prop_assert!(dot(&d.g_minus, &g_prim) <= 1e-8 * minus_scale);
    }

    #[test]
    fn scale_equivariance(
        seed in 0u64..10_000,
        c in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
    ) {
        let dim = 12;
        let mut rng = crate::seed::substream(seed, "prop-scale", 0);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let j = DenseMatrix::from_rows(&rows).unwrap();
        let g_prim = j.row_mean();
        prop_assume!(norm(&g_prim) > 1e-9);
        let g_aux: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let scaled: Vec<f64> = g_aux.iter().map(|v| c * v).collect();

        let basis = build_basis(&BasisStrategy::randomized_svd(3, seed), &j, &g_prim).unwrap();
        let d = decompose(&g_aux, &g_prim, &basis).unwrap();
        let ds = decompose(&scaled, &g_prim, &basis).unwrap();

        let tol = 1e-9 * norm(&scaled).max(1.0);
        let expect_plus: Vec<f64>;
        let expect_minus: Vec<f64>;
        if c > 0.0 {
            expect_plus = d.g_plus.iter().map(|v| c * v).collect();
            expect_minus = d.g_minus.iter().map(|v| c * v).collect();
        } else {
            // Negative scaling swaps the plus/minus supports.
            expect_plus = d.g_minus.iter().map(|v| c * v).collect();
            expect_minus = d.g_plus.iter().map(|v| c * v).collect();
        }
        prop_assert!(max_abs_diff(&ds.g_plus, &expect_plus) <= tol);
        prop_assert!(max_abs_diff(&ds.g_minus, &expect_minus) <= tol);
        let expect_perp: Vec<f64> = d.g_perp.iter().map(|v| c * v).collect();
        prop_assert!(max_abs_diff(&ds.g_perp, &expect_perp) <= tol);
    }
}
