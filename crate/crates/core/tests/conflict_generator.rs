//! The conflict generator must actually exercise the decomposition: with no
//! conflicting block the agreeing in-span component dominates, and with a
//! fully anti-aligned block the conflicting component dominates. Measured
//! through the diagnostics stream of a short training run.

use attittud_core::decomposition::{BasisKind, ControlParams};
use attittud_core::model::{Activation, MlpConfig};
use attittud_core::tasks::{generate_conflict_pair, ConflictSpec};
use attittud_core::trainer::{
    run_strategy, BasisSpec, ClipMode, MaskSpec, OptimizerKind, Strategy, TrainConfig,
};

fn spec(helpful: f64, conflicting: f64) -> ConflictSpec {
    ConflictSpec {
        shared_feature_dim: 16,
        helpful_fraction: helpful,
        conflicting_fraction: conflicting,
        noise_scale: 0.5,
        n_primary: 200,
        n_aux: 400,
    }
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        strategy: Strategy::Attittud,
        eta: ControlParams::aux(1.0, 1.0, 1.0).with_eta_prim(0.1),
        basis: BasisSpec {
            kind: BasisKind::RandomizedSvd,
            k: 4,
        },
        recompute_interval: 2,
        jacobian_sample_count: 16,
        learning_rate: 5e-3,
        optimizer: OptimizerKind::adam_default(),
        clip_norm: 1.0,
        clip_mode: ClipMode::CombinedDirection,
        plateau_patience: 4,
        plateau_factor: 0.5,
        min_lr: 1e-5,
        early_stop_patience: 10,
        max_pretrain_epochs: 14,
        max_finetune_epochs: 1,
        batch_size: 32,
        mask: MaskSpec::TrunkOnly,
        seed,
    }
}

fn model_config() -> MlpConfig {
    MlpConfig {
        input_dim: 16,
        hidden: vec![16],
        activation: Activation::Tanh,
        primary_classes: 2,
        aux_classes: 2,
        dropout: 0.0,
    }
}

/// Median per-step component fractions (plus, minus) of the auxiliary
/// gradient norm; the components are mutually orthogonal so the total norm
/// is recoverable from the three parts.
fn median_component_fractions(helpful: f64, conflicting: f64, seed: u64) -> (f64, f64) {
    let tasks = generate_conflict_pair(&spec(helpful, conflicting), seed).unwrap();
    let out = run_strategy(&train_config(seed), &model_config(), &tasks).unwrap();
    assert!(!out.diagnostics.is_empty());
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for d in &out.diagnostics {
        let aux_norm = (d.g_plus_norm * d.g_plus_norm
            + d.g_minus_norm * d.g_minus_norm
            + d.g_perp_norm * d.g_perp_norm)
            .sqrt();
        if aux_norm > 0.0 {
            plus.push(d.g_plus_norm / aux_norm);
            minus.push(d.g_minus_norm / aux_norm);
        }
    }
    let median = |xs: &mut Vec<f64>| {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    (median(&mut plus), median(&mut minus))
}

#[test]
fn aligned_tasks_put_more_mass_in_the_plus_part() {
    for seed in [1, 2] {
        let (plus, minus) = median_component_fractions(0.8, 0.0, seed);
        assert!(
            minus < plus,
            "seed {seed}: median minus fraction {minus:.3} >= plus {plus:.3}"
        );
    }
}

#[test]
fn anti_aligned_tasks_put_more_mass_in_the_minus_part() {
    for seed in [1, 2] {
        let (plus, minus) = median_component_fractions(0.0, 1.0, seed);
        assert!(
            minus > plus,
            "seed {seed}: median minus fraction {minus:.3} <= plus {plus:.3}"
        );
    }
}
