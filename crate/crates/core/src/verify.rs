//! One-command property suites over the library's mathematical contracts:
//! decomposition identities, single-step descent guarantees, sketch
//! equivalence, subspace-oracle agreement, and gradient correctness.
//!
//! Every suite runs with fixed internal seeds so reruns reproduce the same
//! numbers bit-exactly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decomposition::{
    attittud_surrogate, build_basis, decompose, pcgrad_reference, reweight, BasisStrategy,
    ControlParams, DecompBasis,
};
use crate::linalg::{
    dot, exact_topk_basis, norm, norm_fraction, project_onto, randomized_lowrank_approx,
    DenseMatrix, SketchMatrix,
};
use crate::model::{
    Activation, Batch, LayoutEntry, MlpConfig, MlpModel, ParamLayout, ParamMask, TaskId,
};
use crate::seed::substream;
use crate::trainer::verify_theorem1_quadratic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const SUITE_NAMES: [&str; 4] = ["decomposition", "theorem1", "sketch", "gradients"];

/// Runs one named suite; `None` for an unknown name.
pub fn suite_by_name(name: &str) -> Option<SuiteReport> {
    match name {
        "decomposition" => Some(decomposition_suite()),
        "theorem1" => Some(theorem1_suite()),
        "sketch" => Some(sketch_suite()),
        "gradients" => Some(gradients_suite()),
        _ => None,
    }
}

pub fn all_suites() -> Vec<SuiteReport> {
    SUITE_NAMES
        .iter()
        .map(|n| suite_by_name(n).expect("known suite"))
        .collect()
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

fn random_vec(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DenseMatrix::new(rows, cols, data).expect("shape")
}

fn flat_layout(dim: usize) -> ParamLayout {
    ParamLayout::from_entries(vec![LayoutEntry {
        name: "all".into(),
        rows: dim,
        cols: 1,
        offset: 0,
    }])
}

/// Decomposition exactness over the standard size grid, plus PCGrad
/// equivalence: reconstruction at `(1,1,1)`, orthogonality of the
/// out-of-span part, sign properties of the in-span parts.
pub fn decomposition_suite() -> SuiteReport {
    let dims = [10usize, 100, 1000];
    let ms = [4usize, 16, 64];
    let ks = [1usize, 5, 10];
    let mut rng = substream(0xDEC0, "verify-decomposition", 0);

    let mut worst_recon = 0.0f64;
    let mut worst_perp = 0.0f64;
    let mut worst_plus = 0.0f64;
    let mut worst_minus = 0.0f64;
    let mut instances = 0usize;
    'outer: loop {
        for &d in &dims {
            for &m in &ms {
                for &k in &ks {
                    if instances >= 1000 {
                        break 'outer;
                    }
                    instances += 1;
                    let j = random_matrix(m, d, &mut rng);
                    let g_prim = random_vec(d, &mut rng);
                    let g_aux = random_vec(d, &mut rng);
                    let basis = build_basis(
                        &BasisStrategy::randomized_svd(k, instances as u64),
                        &j,
                        &g_prim,
                    )
                    .expect("basis builds");
                    let parts = decompose(&g_aux, &g_prim, &basis).expect("dims match");
                    let aux_norm = norm(&g_aux);

                    let rebuilt = reweight(&parts, &ControlParams::aux(1.0, 1.0, 1.0));
                    let recon = rebuilt
                        .iter()
                        .zip(&g_aux)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                        / aux_norm;
                    worst_recon = worst_recon.max(recon);

                    if let DecompBasis::Explicit { basis: b, .. } = &basis {
                        let mut perp_defect = 0.0f64;
                        for i in 0..b.k_effective() {
                            perp_defect =
                                perp_defect.max(dot(b.row(i), &parts.g_perp).abs() / aux_norm);
                        }
                        worst_perp = worst_perp.max(perp_defect);
                    }

                    let prim_norm = norm(&g_prim);
                    let plus_dot = dot(&parts.g_plus, &g_prim)
                        / (norm(&parts.g_plus) * prim_norm).max(1e-300);
                    let minus_dot = dot(&parts.g_minus, &g_prim)
                        / (norm(&parts.g_minus) * prim_norm).max(1e-300);
                    worst_plus = worst_plus.min(plus_dot);
                    worst_minus = worst_minus.max(minus_dot);
                }
            }
        }
    }

    let mut checks = vec![
        check(
            "reconstruction_1e-10",
            worst_recon <= 1e-10,
            format!("{instances} instances, worst relative error {worst_recon:.3e}"),
        ),
        check(
            "perp_orthogonal_1e-8",
            worst_perp <= 1e-8,
            format!("worst basis-row dot {worst_perp:.3e}"),
        ),
        check(
            "sign_properties_1e-8",
            worst_plus >= -1e-8 && worst_minus <= 1e-8,
            format!("min normalized plus dot {worst_plus:.3e}, max minus dot {worst_minus:.3e}"),
        ),
    ];

    // PCGrad equivalence: unit_avg_grad basis with (1,1,0).
    let mut rng = substream(0xDEC1, "verify-pcgrad", 0);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let dim = 2 + (case % 49);
        let g_prim = random_vec(dim, &mut rng);
        let g_aux = random_vec(dim, &mut rng);
        let layout = flat_layout(dim);
        let j = DenseMatrix::from_rows(std::slice::from_ref(&g_prim)).expect("one row");
        let out = attittud_surrogate(
            &g_aux,
            &j,
            &ControlParams::aux(1.0, 1.0, 0.0),
            &BasisStrategy::unit_avg_grad(),
            &ParamMask::all(&layout),
        )
        .expect("surrogate");
        let reference = pcgrad_reference(&g_aux, &g_prim).expect("nonzero primary");
        let diff = out
            .surrogate
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / norm(&g_aux);
        worst = worst.max(diff);
    }
    checks.push(check(
        "pcgrad_equivalence_1e-8",
        worst <= 1e-8,
        format!("1000 pairs, worst relative difference {worst:.3e}"),
    ));

    SuiteReport {
        suite: "decomposition".into(),
        checks,
    }
}

/// First-order do-no-harm over an eta grid with `eta_minus = 0`, plus the
/// exact single-step quadratic check.
pub fn theorem1_suite() -> SuiteReport {
    let mut rng = substream(0x7E01, "verify-theorem1", 0);
    let grid: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&p| [0.0, 0.5, 1.0, 2.0].iter().map(move |&q| (p, q)))
        .collect();

    let mut min_dot_prim = f64::INFINITY;
    let mut min_dot_aux = f64::INFINITY;
    for case in 0..1000usize {
        let dim = 6 + (case % 30);
        let m = (dim / 2).max(1);
        let j = random_matrix(m, dim, &mut rng);
        let g_prim = j.row_mean();
        let g_aux = random_vec(dim, &mut rng);
        // k = m: the basis spans every per-example gradient, the regime the
        // guarantee speaks about.
        let basis = build_basis(
            &BasisStrategy::randomized_svd(m, case as u64),
            &j,
            &g_prim,
        )
        .expect("basis builds");
        let parts = decompose(&g_aux, &g_prim, &basis).expect("dims match");
        let (ep, eq) = grid[case % grid.len()];
        let surrogate = reweight(&parts, &ControlParams::aux(ep, eq, 0.0));
        let scale_p = (norm(&g_aux) * norm(&g_prim)).max(1e-12);
        let scale_a = (norm(&g_aux) * norm(&g_aux)).max(1e-12);
        min_dot_prim = min_dot_prim.min(dot(&surrogate, &g_prim) / scale_p);
        min_dot_aux = min_dot_aux.min(dot(&surrogate, &g_aux) / scale_a);
    }
    let mut checks = vec![check(
        "first_order_no_harm_1e-8",
        min_dot_prim >= -1e-8 && min_dot_aux >= -1e-8,
        format!(
            "1000 instances; min normalized dots: prim {min_dot_prim:.3e}, aux {min_dot_aux:.3e}"
        ),
    )];

    let mut aux_ok = true;
    let mut prim_ok = true;
    let mut flip_ok = true;
    let mut zero_ok = true;
    let mut worst_aux = f64::NEG_INFINITY;
    for seed in 0..100u64 {
        let report = verify_theorem1_quadratic(8, seed);
        for case in &report.monotone_cases {
            aux_ok &= case.aux_non_increasing();
            prim_ok &= case.prim_within_bound();
            worst_aux = worst_aux.max(case.delta_aux);
        }
        flip_ok &= report.flip_case.dot_prim >= -1e-8;
        zero_ok &= report.zero_case.delta_prim == 0.0 && report.zero_case.delta_aux == 0.0;
    }
    checks.push(check(
        "quadratic_aux_non_increase",
        aux_ok,
        format!("100 seeds x 5 eta settings; max delta_aux {worst_aux:.3e}"),
    ));
    checks.push(check(
        "quadratic_prim_second_order_bound",
        prim_ok,
        "100 seeds x 5 eta settings".into(),
    ));
    checks.push(check(
        "quadratic_flip_primary_descent",
        flip_ok,
        "(1,0,-1) keeps surrogate.g_prim >= 0".into(),
    ));
    checks.push(check(
        "quadratic_zero_eta_is_identity",
        zero_ok,
        "(0,0,0) changes neither loss".into(),
    ));

    SuiteReport {
        suite: "theorem1".into(),
        checks,
    }
}

fn verify_model(config: MlpConfig, seed: u64) -> (MlpModel, Batch) {
    let model = MlpModel::new(config, seed);
    let mut rng = substream(seed, "verify-batch", 0);
    let m = 16usize;
    let d = model.config().input_dim;
    let inputs = random_matrix(m, d, &mut rng);
    let classes = model.classes(TaskId::Primary);
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
    let batch = Batch::new(inputs, labels, TaskId::Primary).expect("batch");
    (model, batch)
}

/// Sketch-without-Jacobian equivalence on MLPs up to ~10^4 parameters, plus
/// randomized-vs-exact subspace agreement.
pub fn sketch_suite() -> SuiteReport {
    let mut checks = Vec::new();

    // weights^T J without materializing J must match explicit Pi * J.
    let configs = [
        (8usize, vec![16usize, 8], 16usize),
        (32, vec![48, 32], 32),
        (64, vec![96, 64], 64),
    ];
    let mut worst = 0.0f64;
    let mut biggest_d = 0usize;
    for (i, (d_in, hidden, m)) in configs.iter().enumerate() {
        let config = MlpConfig {
            input_dim: *d_in,
            hidden: hidden.clone(),
            activation: Activation::Tanh,
            primary_classes: 3,
            aux_classes: 4,
            dropout: 0.0,
        };
        let (model, batch) = {
            let model = MlpModel::new(config, 100 + i as u64);
            let mut rng = substream(200 + i as u64, "verify-sketch-batch", 0);
            let inputs = random_matrix(*m, *d_in, &mut rng);
            let labels: Vec<usize> = (0..*m).map(|_| rng.random_range(0..3)).collect();
            let batch = Batch::new(inputs, labels, TaskId::Primary).expect("batch");
            (model, batch)
        };
        biggest_d = biggest_d.max(model.num_params());
        let jacobian = model.per_example_jacobian(&batch).expect("jacobian");
        let sketch = SketchMatrix::generate(10, *m, 300 + i as u64);
        for r in 0..sketch.k() {
            let via_model = model
                .weighted_batch_gradient(&batch, sketch.row(r))
                .expect("weighted gradient");
            let mut explicit = vec![0.0; model.num_params()];
            for (row_idx, &w) in sketch.row(r).iter().enumerate() {
                crate::linalg::axpy(w, jacobian.row(row_idx), &mut explicit);
            }
            let rel = via_model
                .values()
                .iter()
                .zip(&explicit)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / norm(&explicit).max(1e-300);
            worst = worst.max(rel);
        }
    }
    checks.push(check(
        "sketch_equivalence_1e-8",
        worst <= 1e-8,
        format!("models up to D={biggest_d}; worst relative row error {worst:.3e}"),
    ));

    // Exact-rank agreement: rank(J) <= k forces identical spans.
    let mut worst_residual = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = substream(seed, "verify-rank", 0);
        let r = 1 + (seed as usize % 5);
        let m = 16;
        let d = 120;
        let factors = random_matrix(r, d, &mut rng);
        let coeffs = random_matrix(m, r, &mut rng);
        let j = coeffs.matmul(&factors).expect("shapes");
        let k = 6;
        let randomized = randomized_lowrank_approx(&j, k, seed).expect("sketch basis");
        let exact = exact_topk_basis(&j, r.min(k)).expect("oracle basis");
        for i in 0..randomized.k_effective() {
            let p = project_onto(&exact, randomized.row(i)).expect("dims");
            worst_residual = worst_residual.max(norm(&p.residual));
        }
        for i in 0..exact.k_effective() {
            let p = project_onto(&randomized, exact.row(i)).expect("dims");
            worst_residual = worst_residual.max(norm(&p.residual));
        }
    }
    checks.push(check(
        "oracle_span_agreement_1e-6",
        worst_residual <= 1e-6,
        format!("100 seeds; worst mutual span residual {worst_residual:.3e}"),
    ));

    // Truncated regime: the sketched basis captures at least 90% of the
    // exact top-k norm fraction (medians over 20 seeds).
    let mut rand_fracs = Vec::new();
    let mut exact_fracs = Vec::new();
    for seed in 0..20u64 {
        let mut rng = substream(seed, "verify-truncated", 0);
        let m = 32;
        let d = 200;
        let k = 5;
        // Spectrum decaying past rank k: the regime where a rank-k basis is
        // meaningful. sigma_i = 1/i^2 over orthonormal factors.
        let u = crate::linalg::gram_schmidt(&random_matrix(m, m, &mut rng), 1e-12).expect("U");
        let v = crate::linalg::gram_schmidt(&random_matrix(m, d, &mut rng), 1e-12).expect("V");
        let mut j = DenseMatrix::zeros(m, d);
        for idx in 0..m {
            let sigma = 1.0 / ((idx + 1) as f64 * (idx + 1) as f64);
            for row in 0..m {
                let scale = sigma * u.row(idx)[row];
                crate::linalg::axpy(scale, v.row(idx), j.row_mut(row));
            }
        }
        let randomized = randomized_lowrank_approx(&j, k, seed).expect("sketch basis");
        let exact = exact_topk_basis(&j, k).expect("oracle basis");
        let mean_capture = |basis: &crate::linalg::SubspaceBasis| -> f64 {
            let mut total = 0.0;
            for row in 0..m {
                total += norm_fraction(basis, j.row(row)).expect("nonzero row");
            }
            total / m as f64
        };
        rand_fracs.push(mean_capture(&randomized));
        exact_fracs.push(mean_capture(&exact));
    }
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        xs[xs.len() / 2]
    };
    let med_rand = median(&mut rand_fracs);
    let med_exact = median(&mut exact_fracs);
    checks.push(check(
        "truncated_capture_ratio_0.9",
        med_rand >= 0.9 * med_exact,
        format!("median randomized {med_rand:.4} vs exact {med_exact:.4}"),
    ));

    SuiteReport {
        suite: "sketch".into(),
        checks,
    }
}

/// Central finite difference for one parameter coordinate.
pub fn finite_difference_gradient(
    model: &MlpModel,
    batch: &Batch,
    coord: usize,
    step: f64,
) -> f64 {
    let mut plus = model.clone();
    plus.params_mut().values_mut()[coord] += step;
    let mut minus = model.clone();
    minus.params_mut().values_mut()[coord] -= step;
    let lp = plus.loss(batch).expect("loss");
    let lm = minus.loss(batch).expect("loss");
    (lp - lm) / (2.0 * step)
}

/// Reverse-mode gradients against central finite differences, 50 sampled
/// coordinates per layer, both activations.
pub fn gradients_suite() -> SuiteReport {
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut probes = 0usize;
    for model_idx in 0..10u64 {
        let activation = if model_idx % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let config = MlpConfig {
            input_dim: 6,
            hidden: vec![12, 8],
            activation,
            primary_classes: 3,
            aux_classes: 2,
            dropout: 0.0,
        };
        let (model, batch) = verify_model(config, 400 + model_idx);
        let analytic = model.batch_gradient(&batch).expect("gradient");
        let mut rng = substream(500 + model_idx, "verify-fd", 0);
        let layout = model.layout().clone();
        for entry in &layout.entries {
            let len = entry.len();
            for _ in 0..50.min(len) {
                let coord = entry.offset + rng.random_range(0..len);
                let fd = finite_difference_gradient(&model, &batch, coord, step);
                let g = analytic.values()[coord];
                let rel = (fd - g).abs() / g.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                probes += 1;
            }
        }
    }
    let checks = vec![check(
        "finite_difference_1e-4",
        worst <= 1e-4,
        format!("{probes} coordinates over 10 models; worst relative error {worst:.3e}"),
    )];
    SuiteReport {
        suite: "gradients".into(),
        checks,
    }
}
