use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::decomposition::{
    build_basis, decompose, descent_check, pcgrad_reference, reweight, BasisKind, BasisStrategy,
    DecompBasis, StepDiagnostics, DEGENERATE_PRIMARY_TOL,
};
use crate::linalg::{axpy, gram_schmidt, norm, DenseMatrix, LinalgError, SketchMatrix,
    DEFAULT_DROP_TOLERANCE};
use crate::model::{Batch, DropoutMask, MlpConfig, MlpModel, ParamLayout, TaskId};
use crate::seed::{derive_seed, substream};
use crate::tasks::{Dataset, TaskPair};

use super::{
    clip_in_place, config_hash, ClipMode, EpochMetrics, OptimizerState, Phase, RunRecord,
    SplitMetrics, Strategy, TrainConfig, TrainError,
};

/// Everything a finished run produces: the record, the decomposition
/// diagnostics stream, and the trained model.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub diagnostics: Vec<StepDiagnostics>,
    pub model: MlpModel,
}

/// Cached decomposition reference, refreshed every `recompute_interval`
/// steps from a fresh Jacobian sample. Between refreshes the cached basis
/// and sign reference are used verbatim.
#[derive(Debug, Clone)]
enum CachedRef {
    /// The sampled primary gradient was degenerate; steps pass the auxiliary
    /// gradient through and flag the event.
    Degenerate,
    /// Basis plus the masked Jacobian-mean used as the sign reference.
    Basis {
        basis: DecompBasis,
        gp_ref_masked: Vec<f64>,
    },
    /// PCGrad projection reference (masked Jacobian mean).
    Projection { gp_ref_masked: Vec<f64> },
}

/// Mutable per-phase training state.
#[derive(Debug)]
pub struct TrainState {
    /// Steps taken within this phase; basis recomputation fires at
    /// `phase_step % recompute_interval == 0`.
    pub phase_step: u64,
    /// Steps taken across all phases of the run.
    pub global_step: u64,
    pub lr: f64,
    optimizer: OptimizerState,
    mask_indices: Vec<usize>,
    cached: Option<CachedRef>,
    /// Phase steps at which the reference was refreshed.
    pub recompute_log: Vec<u64>,
    pub degenerate_events: u64,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl TrainState {
    pub fn new(cfg: &TrainConfig, layout: &Arc<ParamLayout>, global_step_start: u64) -> Self {
        let mask = cfg.mask.build(layout);
        let mask_indices = mask.indices();
        TrainState {
            phase_step: 0,
            global_step: global_step_start,
            lr: cfg.learning_rate,
            optimizer: OptimizerState::new(cfg.optimizer, layout.total),
            mask_indices,
            cached: None,
            recompute_log: Vec::new(),
            degenerate_events: 0,
            diagnostics: Vec::new(),
        }
    }

    fn select_masked(&self, full: &[f64]) -> Vec<f64> {
        self.mask_indices.iter().map(|&i| full[i]).collect()
    }

    fn refresh_reference(
        &mut self,
        model: &MlpModel,
        jacobian_batch: &Batch,
        cfg: &TrainConfig,
    ) -> Result<(), TrainError> {
        let gp_full = model.batch_gradient(jacobian_batch)?;
        let gp_ref_masked = self.select_masked(gp_full.values());
        self.recompute_log.push(self.phase_step);

        if norm(&gp_ref_masked) <= DEGENERATE_PRIMARY_TOL {
            self.cached = Some(CachedRef::Degenerate);
            return Ok(());
        }
        if cfg.strategy == Strategy::Pcgrad {
            self.cached = Some(CachedRef::Projection { gp_ref_masked });
            return Ok(());
        }

        let sketch_seed = derive_seed(cfg.seed, "sketch", self.phase_step);
        let masked_dim = self.mask_indices.len();
        let basis = match cfg.basis.kind {
            BasisKind::RandomizedSvd => {
                // Sketch rows are weighted-batch gradients: Pi * J without
                // materializing J.
                let sketch =
                    SketchMatrix::generate(cfg.basis.k, jacobian_batch.len(), sketch_seed);
                let mut rows = Vec::with_capacity(cfg.basis.k);
                for r in 0..cfg.basis.k {
                    let g = model.weighted_batch_gradient(jacobian_batch, sketch.row(r))?;
                    rows.push(self.select_masked(g.values()));
                }
                let c = DenseMatrix::from_rows(&rows).map_err(crate::decomposition::DecompositionError::from)?;
                match gram_schmidt(&c, DEFAULT_DROP_TOLERANCE) {
                    Ok(b) => DecompBasis::Explicit {
                        basis: b,
                        id: sketch_seed,
                    },
                    Err(LinalgError::AllRowsDegenerate) => {
                        self.cached = Some(CachedRef::Degenerate);
                        return Ok(());
                    }
                    Err(e) => return Err(crate::decomposition::DecompositionError::from(e).into()),
                }
            }
            BasisKind::Random | BasisKind::UnitAvgGrad | BasisKind::Canonical => {
                let strategy = BasisStrategy {
                    kind: cfg.basis.kind,
                    k: cfg.basis.k,
                    seed: sketch_seed,
                };
                let dummy = DenseMatrix::zeros(0, masked_dim);
                build_basis(&strategy, &dummy, &gp_ref_masked)?
            }
        };
        self.cached = Some(CachedRef::Basis {
            basis,
            gp_ref_masked,
        });
        Ok(())
    }

    /// Applies one optimizer update along `direction` (clipping first when
    /// configured) and advances the step counters.
    fn apply_update(&mut self, model: &mut MlpModel, mut direction: Vec<f64>, cfg: &TrainConfig) {
        if cfg.clip_mode == ClipMode::CombinedDirection {
            clip_in_place(&mut direction, cfg.clip_norm);
        }
        self.optimizer
            .apply(model.params_mut().values_mut(), &direction, self.lr);
        self.phase_step += 1;
        self.global_step += 1;
    }
}

/// Gradients for both tasks at the current parameters, with per-step
/// dropout masks when enabled and raw-gradient clipping when configured.
fn task_gradients(
    model: &MlpModel,
    prim_batch: &Batch,
    aux_batch: &Batch,
    cfg: &TrainConfig,
    global_step: u64,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    let rate = model.config().dropout;
    let grad = |batch: &Batch, label: &str| -> Result<Vec<f64>, TrainError> {
        let g = if rate > 0.0 {
            let mask = DropoutMask::sample(
                model.config(),
                batch.len(),
                derive_seed(cfg.seed, label, global_step),
            );
            model.batch_gradient_with_dropout(batch, Some(&mask))?
        } else {
            model.batch_gradient(batch)?
        };
        Ok(g.into_values())
    };
    let mut g_prim = grad(prim_batch, "dropout-prim")?;
    let mut g_aux = grad(aux_batch, "dropout-aux")?;
    if cfg.clip_mode == ClipMode::RawGradients {
        clip_in_place(&mut g_prim, cfg.clip_norm);
        clip_in_place(&mut g_aux, cfg.clip_norm);
    }
    Ok((g_prim, g_aux))
}

/// One pretraining step of the decomposed-surrogate strategy.
///
/// At steps congruent to 0 mod `recompute_interval` the basis and sign
/// reference are refreshed from `jacobian_batch` (required then, unused
/// otherwise). The update direction is
/// `reweighted surrogate + eta_prim * g_prim`, clipped, then applied
/// through the optimizer.
pub fn train_step_attittud(
    model: &mut MlpModel,
    prim_batch: &Batch,
    aux_batch: &Batch,
    jacobian_batch: Option<&Batch>,
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<(), TrainError> {
    if state.phase_step % cfg.recompute_interval as u64 == 0 {
        let jac = jacobian_batch.ok_or_else(|| {
            TrainError::ConfigInvalid("basis recomputation step requires a jacobian batch".into())
        })?;
        state.refresh_reference(model, jac, cfg)?;
    }
    let (g_prim, g_aux) = task_gradients(model, prim_batch, aux_batch, cfg, state.global_step)?;

    let (surrogate, record) = match state.cached.as_ref().expect("reference refreshed") {
        CachedRef::Degenerate => {
            state.degenerate_events += 1;
            let check = descent_check(&g_prim, &g_aux, &g_aux);
            let record = StepDiagnostics {
                step: state.global_step,
                k_effective: 0,
                norm_fraction_prim: 0.0,
                norm_fraction_aux: 0.0,
                g_plus_norm: 0.0,
                g_minus_norm: 0.0,
                g_perp_norm: 0.0,
                dot_prim: check.dot_prim,
                dot_aux: check.dot_aux,
                degenerate_flag: true,
            };
            (g_aux.clone(), record)
        }
        CachedRef::Projection { .. } => {
            return Err(TrainError::ConfigInvalid(
                "train_step_attittud called with a PCGrad reference".into(),
            ));
        }
        CachedRef::Basis {
            basis,
            gp_ref_masked,
        } => {
            let ga_masked = state.select_masked(&g_aux);
            let gp_step_masked = state.select_masked(&g_prim);
            let parts = decompose(&ga_masked, gp_ref_masked, basis)?;
            let reweighted = reweight(&parts, &cfg.eta);
            let mut surrogate = g_aux.clone();
            for (slot, &i) in state.mask_indices.iter().enumerate() {
                surrogate[i] = reweighted[slot];
            }
            let check = descent_check(&g_prim, &g_aux, &surrogate);
            let frac_prim = if norm(&gp_step_masked) > 0.0 {
                basis.capture_fraction(&gp_step_masked)
            } else {
                0.0
            };
            let frac_aux = if norm(&ga_masked) > 0.0 {
                basis.capture_fraction(&ga_masked)
            } else {
                0.0
            };
            let record = StepDiagnostics {
                step: state.global_step,
                k_effective: basis.k_effective(),
                norm_fraction_prim: frac_prim,
                norm_fraction_aux: frac_aux,
                g_plus_norm: norm(&parts.g_plus),
                g_minus_norm: norm(&parts.g_minus),
                g_perp_norm: norm(&parts.g_perp),
                dot_prim: check.dot_prim,
                dot_aux: check.dot_aux,
                degenerate_flag: false,
            };
            (surrogate, record)
        }
    };

    let mut direction = surrogate;
    axpy(cfg.eta.eta_prim, &g_prim, &mut direction);
    state.diagnostics.push(record);
    state.apply_update(model, direction, cfg);
    Ok(())
}

/// One PCGrad pretraining step, structured exactly like the surrogate step:
/// the projection reference is the masked Jacobian mean, refreshed at the
/// same cadence.
fn pcgrad_step(
    model: &mut MlpModel,
    prim_batch: &Batch,
    aux_batch: &Batch,
    jacobian_batch: Option<&Batch>,
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<(), TrainError> {
    if state.phase_step % cfg.recompute_interval as u64 == 0 {
        let jac = jacobian_batch.ok_or_else(|| {
            TrainError::ConfigInvalid("projection refresh step requires a jacobian batch".into())
        })?;
        state.refresh_reference(model, jac, cfg)?;
    }
    let (g_prim, g_aux) = task_gradients(model, prim_batch, aux_batch, cfg, state.global_step)?;
    let surrogate = match state.cached.as_ref().expect("reference refreshed") {
        CachedRef::Degenerate => {
            state.degenerate_events += 1;
            g_aux.clone()
        }
        CachedRef::Projection { gp_ref_masked } => {
            let ga_masked = state.select_masked(&g_aux);
            let projected = pcgrad_reference(&ga_masked, gp_ref_masked)?;
            let mut surrogate = g_aux.clone();
            for (slot, &i) in state.mask_indices.iter().enumerate() {
                surrogate[i] = projected[slot];
            }
            surrogate
        }
        CachedRef::Basis { .. } => {
            return Err(TrainError::ConfigInvalid(
                "pcgrad step called with a decomposition basis".into(),
            ));
        }
    };
    let mut direction = surrogate;
    axpy(cfg.eta.eta_prim, &g_prim, &mut direction);
    state.apply_update(model, direction, cfg);
    Ok(())
}

/// Multitask / vanilla-pretraining step: no decomposition.
fn combined_step(
    model: &mut MlpModel,
    prim_batch: &Batch,
    aux_batch: &Batch,
    eta_prim: f64,
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<(), TrainError> {
    let (g_prim, g_aux) = task_gradients(model, prim_batch, aux_batch, cfg, state.global_step)?;
    let mut direction = g_aux;
    axpy(eta_prim, &g_prim, &mut direction);
    state.apply_update(model, direction, cfg);
    Ok(())
}

/// Primary-only step (finetuning and the no-pretraining baseline).
fn primary_step(
    model: &mut MlpModel,
    prim_batch: &Batch,
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<(), TrainError> {
    let rate = model.config().dropout;
    let g = if rate > 0.0 {
        let mask = DropoutMask::sample(
            model.config(),
            prim_batch.len(),
            derive_seed(cfg.seed, "dropout-prim", state.global_step),
        );
        model.batch_gradient_with_dropout(prim_batch, Some(&mask))?
    } else {
        model.batch_gradient(prim_batch)?
    };
    let mut direction = g.into_values();
    if cfg.clip_mode == ClipMode::RawGradients {
        clip_in_place(&mut direction, cfg.clip_norm);
    }
    state.apply_update(model, direction, cfg);
    Ok(())
}

fn batch_from(ds: &Dataset, indices: &[usize], task: TaskId) -> Result<Batch, TrainError> {
    let selected = ds.select(indices);
    Ok(Batch::new(selected.features, selected.labels, task)?)
}

fn full_batch(ds: &Dataset, task: TaskId) -> Result<Batch, TrainError> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    batch_from(ds, &indices, task)
}

/// Deterministic infinite cycler over primary-train indices: reshuffles
/// (with a fresh substream index) whenever a full batch no longer fits.
struct Cycler {
    order: Vec<usize>,
    cursor: usize,
    reshuffles: u64,
    seed: u64,
}

impl Cycler {
    fn new(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, "prim-order", 0));
        Cycler {
            order,
            cursor: 0,
            reshuffles: 0,
            seed,
        }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        debug_assert!(k <= self.order.len());
        if self.cursor + k > self.order.len() {
            self.reshuffles += 1;
            self.order
                .shuffle(&mut substream(self.seed, "prim-order", self.reshuffles));
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + k].to_vec();
        self.cursor += k;
        out
    }
}

struct EvalSets {
    prim_train: Batch,
    prim_val: Batch,
    aux_train: Batch,
    aux_val: Batch,
}

fn evaluate_epoch(model: &MlpModel, sets: &EvalSets) -> Result<[SplitMetrics; 4], TrainError> {
    let eval = |batch: &Batch| -> Result<SplitMetrics, TrainError> {
        let (loss, accuracy) = model.evaluate(batch)?;
        Ok(SplitMetrics { loss, accuracy })
    };
    Ok([
        eval(&sets.prim_train)?,
        eval(&sets.prim_val)?,
        eval(&sets.aux_train)?,
        eval(&sets.aux_val)?,
    ])
}

struct PhaseOutcome {
    epochs_run: usize,
    degenerate_events: u64,
    global_step: u64,
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    phase: Phase,
    model: &mut MlpModel,
    cfg: &TrainConfig,
    prim_train: &Dataset,
    aux_train: &Dataset,
    eval_sets: &EvalSets,
    epochs_out: &mut Vec<EpochMetrics>,
    diagnostics: &mut Vec<StepDiagnostics>,
    global_step_start: u64,
) -> Result<PhaseOutcome, TrainError> {
    let max_epochs = match phase {
        Phase::Pretrain => cfg.max_pretrain_epochs,
        Phase::Finetune => cfg.max_finetune_epochs,
    };
    let mut state = TrainState::new(cfg, model.layout(), global_step_start);
    let driving_len = match phase {
        Phase::Pretrain => aux_train.len(),
        Phase::Finetune => prim_train.len(),
    };
    let bs = cfg.batch_size.min(driving_len);
    let prim_bs = cfg.batch_size.min(prim_train.len());
    let mut prim_cycler = Cycler::new(prim_train.len(), cfg.seed);
    let order_label = match phase {
        Phase::Pretrain => "pretrain-order",
        Phase::Finetune => "finetune-order",
    };
    let needs_reference = matches!(cfg.strategy, Strategy::Attittud | Strategy::Pcgrad);

    let mut best_val = f64::INFINITY;
    let mut best_params = model.params().clone();
    let mut since_improve = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=max_epochs {
        let lr_this_epoch = state.lr;
        let mut order: Vec<usize> = (0..driving_len).collect();
        order.shuffle(&mut substream(cfg.seed, order_label, epoch as u64));
        for chunk in order.chunks(bs) {
            match phase {
                Phase::Finetune => {
                    let batch = batch_from(prim_train, chunk, TaskId::Primary)?;
                    primary_step(model, &batch, cfg, &mut state)?;
                }
                Phase::Pretrain => {
                    let aux_batch = batch_from(aux_train, chunk, TaskId::Auxiliary)?;
                    let prim_idx = prim_cycler.take(prim_bs);
                    let prim_batch = batch_from(prim_train, &prim_idx, TaskId::Primary)?;
                    let jac_batch = if needs_reference
                        && state.phase_step % cfg.recompute_interval as u64 == 0
                    {
                        let mut jrng = substream(cfg.seed, "jacobian", state.phase_step);
                        let idx = rand::seq::index::sample(
                            &mut jrng,
                            prim_train.len(),
                            cfg.jacobian_sample_count,
                        )
                        .into_vec();
                        Some(batch_from(prim_train, &idx, TaskId::Primary)?)
                    } else {
                        None
                    };
                    match cfg.strategy {
                        Strategy::Attittud => train_step_attittud(
                            model,
                            &prim_batch,
                            &aux_batch,
                            jac_batch.as_ref(),
                            cfg,
                            &mut state,
                        )?,
                        Strategy::Pcgrad => pcgrad_step(
                            model,
                            &prim_batch,
                            &aux_batch,
                            jac_batch.as_ref(),
                            cfg,
                            &mut state,
                        )?,
                        Strategy::Multitask => combined_step(
                            model,
                            &prim_batch,
                            &aux_batch,
                            cfg.eta.eta_prim,
                            cfg,
                            &mut state,
                        )?,
                        Strategy::PretrainFinetune => {
                            combined_step(model, &prim_batch, &aux_batch, 0.0, cfg, &mut state)?
                        }
                        Strategy::None => unreachable!("no pretraining phase for Strategy::None"),
                    }
                }
            }
        }

        let [primary_train_m, primary_val_m, aux_train_m, aux_val_m] =
            evaluate_epoch(model, eval_sets)?;
        epochs_out.push(EpochMetrics {
            phase,
            epoch,
            step: state.global_step,
            learning_rate: lr_this_epoch,
            primary_train: primary_train_m,
            primary_val: primary_val_m,
            aux_train: aux_train_m,
            aux_val: aux_val_m,
        });
        epochs_run = epoch;

        // Plateau decay and early stopping track primary validation loss in
        // every strategy.
        if primary_val_m.loss < best_val {
            best_val = primary_val_m.loss;
            best_params = model.params().clone();
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve % cfg.plateau_patience == 0 {
                state.lr = (state.lr * cfg.plateau_factor).max(cfg.min_lr);
            }
            if since_improve >= cfg.early_stop_patience {
                break;
            }
        }
    }

    *model.params_mut() = best_params;
    diagnostics.append(&mut state.diagnostics);
    Ok(PhaseOutcome {
        epochs_run,
        degenerate_events: state.degenerate_events,
        global_step: state.global_step,
    })
}

fn validate_against_tasks(
    cfg: &TrainConfig,
    model_cfg: &MlpConfig,
    tasks: &TaskPair,
) -> Result<(), TrainError> {
    let bad = |msg: String| Err(TrainError::ConfigInvalid(msg));
    let prim = &tasks.primary;
    let aux = &tasks.auxiliary;
    if model_cfg.input_dim != prim.dataset.dim() || model_cfg.input_dim != aux.dataset.dim() {
        return bad(format!(
            "model input_dim {} does not match task dims {}/{}",
            model_cfg.input_dim,
            prim.dataset.dim(),
            aux.dataset.dim()
        ));
    }
    if model_cfg.primary_classes != prim.dataset.n_classes {
        return bad("primary head size does not match primary class count".into());
    }
    if model_cfg.aux_classes != aux.dataset.n_classes {
        return bad("aux head size does not match aux class count".into());
    }
    if !(0.0..1.0).contains(&model_cfg.dropout) {
        return bad(format!("dropout {} must lie in [0,1)", model_cfg.dropout));
    }
    if prim.split.train.len() < 2 {
        return bad("primary train split needs at least 2 examples".into());
    }
    if prim.split.val.is_empty() || prim.split.test.is_empty() {
        return bad("primary val and test splits must be nonempty".into());
    }
    if aux.split.train.is_empty() || aux.split.val.is_empty() || aux.split.test.is_empty() {
        return bad("aux train/val/test splits must be nonempty".into());
    }
    if cfg.jacobian_sample_count > prim.split.train.len() {
        return bad(format!(
            "jacobian_sample_count {} exceeds primary train size {}",
            cfg.jacobian_sample_count,
            prim.split.train.len()
        ));
    }
    Ok(())
}

/// Executes the full schedule for the configured strategy: an optional
/// pretraining phase followed by primary-only finetuning, with plateau
/// decay, early stopping, and epoch caps. Returns the record, diagnostics
/// stream, and the final (best-validation) model.
pub fn run_strategy(
    cfg: &TrainConfig,
    model_cfg: &MlpConfig,
    tasks: &TaskPair,
) -> Result<RunOutput, TrainError> {
    cfg.validate()?;
    validate_against_tasks(cfg, model_cfg, tasks)?;
    let started = Instant::now();

    let mut model = MlpModel::new(model_cfg.clone(), cfg.seed);
    let prim_train = tasks.primary.train_view();
    let aux_train = tasks.auxiliary.train_view();
    let eval_sets = EvalSets {
        prim_train: full_batch(&prim_train, TaskId::Primary)?,
        prim_val: full_batch(&tasks.primary.val_view(), TaskId::Primary)?,
        aux_train: full_batch(&aux_train, TaskId::Auxiliary)?,
        aux_val: full_batch(&tasks.auxiliary.val_view(), TaskId::Auxiliary)?,
    };

    let mut epochs = Vec::new();
    let mut diagnostics = Vec::new();
    let mut degenerate_events = 0u64;
    let mut global_step = 0u64;
    let mut pretrain_epochs_run = 0usize;

    if cfg.strategy != Strategy::None {
        let outcome = run_phase(
            Phase::Pretrain,
            &mut model,
            cfg,
            &prim_train,
            &aux_train,
            &eval_sets,
            &mut epochs,
            &mut diagnostics,
            global_step,
        )?;
        pretrain_epochs_run = outcome.epochs_run;
        degenerate_events += outcome.degenerate_events;
        global_step = outcome.global_step;
    }

    let outcome = run_phase(
        Phase::Finetune,
        &mut model,
        cfg,
        &prim_train,
        &aux_train,
        &eval_sets,
        &mut epochs,
        &mut diagnostics,
        global_step,
    )?;
    let finetune_epochs_run = outcome.epochs_run;
    degenerate_events += outcome.degenerate_events;
    global_step = outcome.global_step;

    let prim_test = full_batch(&tasks.primary.test_view(), TaskId::Primary)?;
    let aux_test = full_batch(&tasks.auxiliary.test_view(), TaskId::Auxiliary)?;
    let (pt_loss, pt_acc) = model.evaluate(&prim_test)?;
    let (at_loss, at_acc) = model.evaluate(&aux_test)?;

    let record = RunRecord {
        config_hash: config_hash(cfg, model_cfg),
        strategy: cfg.strategy,
        seed: cfg.seed,
        epochs,
        primary_test: SplitMetrics {
            loss: pt_loss,
            accuracy: pt_acc,
        },
        aux_test: SplitMetrics {
            loss: at_loss,
            accuracy: at_acc,
        },
        degenerate_events,
        pretrain_epochs_run,
        finetune_epochs_run,
        total_steps: global_step,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        diagnostics_path: None,
    };
    Ok(RunOutput {
        record,
        diagnostics,
        model,
    })
}
