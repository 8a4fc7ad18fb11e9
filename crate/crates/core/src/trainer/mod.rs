//! Training strategies over a shared-trunk model: primary-only baselines,
//! vanilla pretrain/finetune, multitask, PCGrad, and surrogate-gradient
//! pretraining with periodic basis recomputation, gradient clipping,
//! plateau learning-rate decay, and early stopping.
//!
//! Every schedule runs the same finetuning phase (primary task only); the
//! strategies differ in the pretraining phase that precedes it. Plateau and
//! early-stop decisions track primary-task validation loss in all
//! strategies: the objective is asymmetric by construction.

mod optimizer;
mod quadratic;
mod run;

pub use optimizer::{OptimizerKind, OptimizerState};
pub use quadratic::{verify_theorem1_quadratic, QuadraticCase, QuadraticReport};
pub use run::{run_strategy, train_step_attittud, RunOutput, TrainState};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decomposition::{BasisKind, ControlParams, DecompositionError, StepDiagnostics};
use crate::linalg::norm;
use crate::model::{MlpConfig, ModelError, ParamLayout, ParamMask};
use crate::tasks::TaskError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Finetune-only baseline (no pretraining).
    None,
    /// Vanilla pretraining on the auxiliary task, then finetuning.
    PretrainFinetune,
    /// Pretraining with `g_aux + eta_prim * g_prim`.
    Multitask,
    /// Pretraining with the reference PCGrad projection plus
    /// `eta_prim * g_prim`.
    Pcgrad,
    /// Pretraining with the decomposed, reweighted auxiliary gradient plus
    /// `eta_prim * g_prim`.
    Attittud,
}

/// Basis choice at the config level; sketch seeds are derived from the run
/// seed at each recomputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

/// Which parameters the decomposition applies to; the rest receive the raw
/// auxiliary gradient. Layer names match the model layout; `exclude` uses
/// prefix matching, so `"trunk.0"` removes both weight and bias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSpec {
    All,
    TrunkOnly,
    Exclude { prefixes: Vec<String> },
}

impl MaskSpec {
    pub fn build(&self, layout: &ParamLayout) -> ParamMask {
        match self {
            MaskSpec::All => ParamMask::all(layout),
            MaskSpec::TrunkOnly => {
                ParamMask::from_layer_filter(layout, |name| name.starts_with("trunk."))
            }
            MaskSpec::Exclude { prefixes } => ParamMask::from_layer_filter(layout, |name| {
                !prefixes.iter().any(|p| name.starts_with(p.as_str()))
            }),
        }
    }
}

/// Whether clipping applies to the final combined direction (default) or to
/// the raw task gradients before decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    CombinedDirection,
    RawGradients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Auxiliary triple (perp, plus, minus) and the primary weight for the
    /// pretraining phase. Finetuning always runs `(0,0,0)` with unit
    /// primary weight.
    pub eta: ControlParams,
    #[serde(default = "default_basis")]
    pub basis: BasisSpec,
    /// Recompute the subspace every `n` steps.
    #[serde(default = "default_recompute_interval")]
    pub recompute_interval: usize,
    /// Number of per-example gradients behind each basis estimate.
    #[serde(default = "default_jacobian_samples")]
    pub jacobian_sample_count: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "OptimizerKind::adam_default")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_clip_mode")]
    pub clip_mode: ClipMode,
    #[serde(default = "default_plateau_patience")]
    pub plateau_patience: usize,
    #[serde(default = "default_plateau_factor")]
    pub plateau_factor: f64,
    #[serde(default = "default_min_lr")]
    pub min_lr: f64,
    #[serde(default = "default_early_stop")]
    pub early_stop_patience: usize,
    #[serde(default = "default_max_pretrain")]
    pub max_pretrain_epochs: usize,
    #[serde(default = "default_max_finetune")]
    pub max_finetune_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_mask")]
    pub mask: MaskSpec,
    pub seed: u64,
}

fn default_basis() -> BasisSpec {
    BasisSpec {
        kind: BasisKind::RandomizedSvd,
        k: 5,
    }
}
fn default_recompute_interval() -> usize {
    5
}
fn default_jacobian_samples() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    1e-4
}
fn default_clip_norm() -> f64 {
    1.0
}
fn default_clip_mode() -> ClipMode {
    ClipMode::CombinedDirection
}
fn default_plateau_patience() -> usize {
    4
}
fn default_plateau_factor() -> f64 {
    0.5
}
fn default_min_lr() -> f64 {
    1e-5
}
fn default_early_stop() -> usize {
    10
}
fn default_max_pretrain() -> usize {
    150
}
fn default_max_finetune() -> usize {
    500
}
fn default_batch_size() -> usize {
    32
}
fn default_mask() -> MaskSpec {
    MaskSpec::All
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::ConfigInvalid(msg));
        if self.recompute_interval < 1 {
            return bad("recompute_interval must be >= 1".into());
        }
        if self.jacobian_sample_count < 1 {
            return bad("jacobian_sample_count must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!(
                "plateau_factor {} must lie in (0,1)",
                self.plateau_factor
            ));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm {} must be > 0", self.clip_norm));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.eta.is_finite() {
            return bad("eta values must be finite".into());
        }
        match self.basis.kind {
            BasisKind::RandomizedSvd | BasisKind::Random if self.basis.k < 1 => {
                return bad("basis k must be >= 1".into());
            }
            _ => {}
        }
        if self.plateau_patience < 1 || self.early_stop_patience < 1 {
            return bad("patience values must be >= 1".into());
        }
        Ok(())
    }
}

/// Loss and accuracy on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub phase: Phase,
    /// 1-based epoch index within the phase.
    pub epoch: usize,
    /// Global optimizer steps completed at epoch end.
    pub step: u64,
    pub learning_rate: f64,
    pub primary_train: SplitMetrics,
    pub primary_val: SplitMetrics,
    pub aux_train: SplitMetrics,
    pub aux_val: SplitMetrics,
}

/// Complete record of one training run. `(config, seed)` determines every
/// field except `wall_clock_secs` and `diagnostics_path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub primary_test: SplitMetrics,
    pub aux_test: SplitMetrics,
    pub degenerate_events: u64,
    pub pretrain_epochs_run: usize,
    pub finetune_epochs_run: usize,
    pub total_steps: u64,
    pub wall_clock_secs: f64,
    pub diagnostics_path: Option<String>,
}

impl RunRecord {
    /// Per-epoch metrics as CSV: `step,epoch,phase,task,split,loss,accuracy`,
    /// with final test rows appended.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("step,epoch,phase,task,split,loss,accuracy\n");
        let mut push = |step: u64, epoch: usize, phase: &str, task: &str, split: &str, m: &SplitMetrics| {
            out.push_str(&format!(
                "{step},{epoch},{phase},{task},{split},{},{}\n",
                m.loss, m.accuracy
            ));
        };
        for e in &self.epochs {
            let phase = e.phase.as_str();
            push(e.step, e.epoch, phase, "primary", "train", &e.primary_train);
            push(e.step, e.epoch, phase, "primary", "val", &e.primary_val);
            push(e.step, e.epoch, phase, "aux", "train", &e.aux_train);
            push(e.step, e.epoch, phase, "aux", "val", &e.aux_val);
        }
        let last_epoch = self.epochs.last().map_or(0, |e| e.epoch);
        push(
            self.total_steps,
            last_epoch,
            "finetune",
            "primary",
            "test",
            &self.primary_test,
        );
        push(
            self.total_steps,
            last_epoch,
            "finetune",
            "aux",
            "test",
            &self.aux_test,
        );
        out
    }

    /// The record with volatile fields cleared, for determinism comparisons.
    pub fn numeric_content(&self) -> RunRecord {
        let mut r = self.clone();
        r.wall_clock_secs = 0.0;
        r.diagnostics_path = None;
        r
    }
}

/// Hash identifying `(train config, model config, seed)`; reruns with the
/// same hash reproduce the run's numeric content.
pub fn config_hash(cfg: &TrainConfig, model_cfg: &MlpConfig) -> String {
    #[derive(Serialize)]
    struct HashInput<'a> {
        cfg: &'a TrainConfig,
        model: &'a MlpConfig,
    }
    let json = serde_json::to_string(&HashInput {
        cfg,
        model: model_cfg,
    })
    .expect("config serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

/// Rescales `g` to `clip_norm` when it is longer; shorter vectors pass
/// through unchanged.
pub fn clip_gradient(g: &[f64], clip_norm: f64) -> Vec<f64> {
    assert!(clip_norm > 0.0, "clip_norm must be positive");
    let n = norm(g);
    if n > clip_norm {
        let s = clip_norm / n;
        g.iter().map(|v| v * s).collect()
    } else {
        g.to_vec()
    }
}

pub(crate) fn clip_in_place(g: &mut [f64], clip_norm: f64) {
    let n = norm(g);
    if n > clip_norm {
        let s = clip_norm / n;
        for v in g {
            *v *= s;
        }
    }
}

/// Diagnostics stream serialization: one JSON object per line.
pub fn diagnostics_to_jsonl(records: &[StepDiagnostics]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_leaves_short_vectors_alone() {
        let g = vec![0.3, 0.4];
        assert_eq!(clip_gradient(&g, 1.0), g);
    }

    #[test]
    fn clip_rescales_long_vectors() {
        let out = clip_gradient(&[3.0, 4.0], 1.0);
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert!((out[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_never_exceeds_bound() {
        use rand::Rng;
        let mut rng = crate::seed::substream(1, "clip", 0);
        for _ in 0..100 {
            let g: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let out = clip_gradient(&g, 1.0);
            assert!(norm(&out) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn config_hash_distinguishes_seeds() {
        let mut cfg = TrainConfig {
            strategy: Strategy::None,
            eta: ControlParams::primary_only(),
            basis: default_basis(),
            recompute_interval: 5,
            jacobian_sample_count: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam_default(),
            clip_norm: 1.0,
            clip_mode: ClipMode::CombinedDirection,
            plateau_patience: 4,
            plateau_factor: 0.5,
            min_lr: 1e-5,
            early_stop_patience: 10,
            max_pretrain_epochs: 5,
            max_finetune_epochs: 5,
            batch_size: 8,
            mask: MaskSpec::All,
            seed: 0,
        };
        let model = MlpConfig {
            input_dim: 4,
            hidden: vec![8],
            activation: crate::model::Activation::Tanh,
            primary_classes: 2,
            aux_classes: 2,
            dropout: 0.0,
        };
        let a = config_hash(&cfg, &model);
        cfg.seed = 1;
        let b = config_hash(&cfg, &model);
        assert_ne!(a, b);
    }
}
