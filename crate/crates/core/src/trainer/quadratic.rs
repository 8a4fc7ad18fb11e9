use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decomposition::{decompose, reweight, ControlParams};
use crate::linalg::{dot, gram_schmidt, norm, randomized_lowrank_approx, DenseMatrix};
use crate::seed::substream;

/// One eta setting evaluated on the random quadratic pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCase {
    pub eta: (f64, f64, f64),
    /// Exact quadratic-expansion loss changes after one step.
    pub delta_prim: f64,
    pub delta_aux: f64,
    /// The allowed primary increase: `1e-10 + (L * alpha^2 / 2) |s|^2`.
    pub prim_bound: f64,
    pub dot_prim: f64,
    pub dot_aux: f64,
    pub surrogate_norm: f64,
}

impl QuadraticCase {
    pub fn aux_non_increasing(&self) -> bool {
        self.delta_aux <= 0.0
    }

    pub fn prim_within_bound(&self) -> bool {
        self.delta_prim <= self.prim_bound
    }
}

/// Single-step descent measurements on two random convex quadratics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticReport {
    pub dim: usize,
    pub seed: u64,
    pub lipschitz: f64,
    pub alpha: f64,
    /// Cases with `eta_minus = 0` and `eta_perp, eta_plus in [0, 1]`, where
    /// one step must not increase either loss.
    pub monotone_cases: Vec<QuadraticCase>,
    /// The sign-flip setting `(1, 0, -1)`: primary descent only.
    pub flip_case: QuadraticCase,
    /// The `(0,0,0)` setting: both deltas are exactly zero.
    pub zero_case: QuadraticCase,
}

/// Symmetric PSD matrix with eigenvalues in `[lo, hi]`.
fn random_psd(dim: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> (DenseMatrix, f64) {
    let gaussian: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let q = gram_schmidt(&DenseMatrix::from_rows(&gaussian).unwrap(), 1e-12)
        .expect("random matrix is full rank");
    assert_eq!(q.k_effective(), dim);
    let eigs: Vec<f64> = (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    let mut a = DenseMatrix::zeros(dim, dim);
    for (k, &lambda) in eigs.iter().enumerate() {
        let qk = q.row(k);
        for i in 0..dim {
            let scaled = lambda * qk[i];
            let row = a.row_mut(i);
            for (j, &qkj) in qk.iter().enumerate() {
                row[j] += scaled * qkj;
            }
        }
    }
    let max_eig = eigs.iter().copied().fold(0.0f64, f64::max);
    (a, max_eig)
}

fn quad_form(a: &DenseMatrix, x: &[f64]) -> f64 {
    let ax = a.mul_vec(x).expect("square matvec");
    dot(x, &ax)
}

/// Builds two random convex quadratic losses, draws per-example primary
/// gradients from randomized anchor points, applies one surrogate step with
/// `alpha = 1/L`, and reports the exact loss changes.
///
/// The basis spans the full Jacobian row space (`k = dim`), which is the
/// regime where the do-no-harm guarantee applies: the mean primary gradient
/// then lies inside the subspace.
pub fn verify_theorem1_quadratic(dim: usize, seed: u64) -> QuadraticReport {
    assert!(dim >= 2, "dim must be at least 2");
    let mut rng = substream(seed, "quadratic", 0);

    let (a_mat, l_a) = random_psd(dim, 0.2, 3.0, &mut rng);
    let (b_mat, l_b) = random_psd(dim, 0.2, 3.0, &mut rng);
    let lipschitz = l_a.max(l_b);
    let alpha = 1.0 / lipschitz;

    let theta: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a_center: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b_center: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();

    // Per-example primary losses share the Hessian A but have jittered
    // anchor points; their gradients at theta are the Jacobian rows. Fewer
    // examples than dimensions keeps the span proper, so the out-of-span
    // component is genuinely nonzero while the mean gradient stays inside.
    let m = ((dim + 1) / 2).max(1);
    let mut anchors = Vec::with_capacity(m);
    for _ in 0..m {
        let anchor: Vec<f64> = a_center
            .iter()
            .map(|c| {
                let jitter: f64 = StandardNormal.sample(&mut rng);
                c + 0.5 * jitter
            })
            .collect();
        anchors.push(anchor);
    }
    let jac_rows: Vec<Vec<f64>> = anchors
        .iter()
        .map(|anchor| {
            let diff: Vec<f64> = theta.iter().zip(anchor).map(|(t, c)| t - c).collect();
            a_mat.mul_vec(&diff).expect("matvec")
        })
        .collect();
    let jacobian = DenseMatrix::from_rows(&jac_rows).unwrap();
    let g_prim = jacobian.row_mean();
    let diff_b: Vec<f64> = theta.iter().zip(&b_center).map(|(t, c)| t - c).collect();
    let g_aux = b_mat.mul_vec(&diff_b).expect("matvec");

    let basis = {
        let b = randomized_lowrank_approx(&jacobian, m, seed ^ 0x9e37).expect("full-rank sketch");
        crate::decomposition::DecompBasis::Explicit { basis: b, id: 0 }
    };
    let parts = decompose(&g_aux, &g_prim, &basis).expect("dims match");

    let evaluate = |eta: (f64, f64, f64)| -> QuadraticCase {
        let surrogate = reweight(
            &parts,
            &ControlParams::aux(eta.0, eta.1, eta.2),
        );
        // Exact expansion of a quadratic loss at theta - alpha*s:
        // delta = -alpha s.g + (alpha^2/2) s^T H s.
        let delta_prim =
            -alpha * dot(&surrogate, &g_prim) + 0.5 * alpha * alpha * quad_form(&a_mat, &surrogate);
        let delta_aux =
            -alpha * dot(&surrogate, &g_aux) + 0.5 * alpha * alpha * quad_form(&b_mat, &surrogate);
        let s_norm = norm(&surrogate);
        QuadraticCase {
            eta,
            delta_prim,
            delta_aux,
            prim_bound: 1e-10 + 0.5 * lipschitz * alpha * alpha * s_norm * s_norm,
            dot_prim: dot(&surrogate, &g_prim),
            dot_aux: dot(&surrogate, &g_aux),
            surrogate_norm: s_norm,
        }
    };

    let monotone_cases = vec![
        evaluate((1.0, 1.0, 0.0)),
        evaluate((1.0, 0.0, 0.0)),
        evaluate((0.0, 1.0, 0.0)),
        evaluate((0.5, 1.0, 0.0)),
        evaluate((1.0, 0.5, 0.0)),
    ];
    let flip_case = evaluate((1.0, 0.0, -1.0));
    let zero_case = evaluate((0.0, 0.0, 0.0));

    QuadraticReport {
        dim,
        seed,
        lipschitz,
        alpha,
        monotone_cases,
        flip_case,
        zero_case,
    }
}
