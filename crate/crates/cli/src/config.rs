//! Experiment configuration: one JSON document holding the training config,
//! the task source, and optional sweep axes. Unknown keys are rejected
//! everywhere; the published schema lives at `schema/experiment-config.schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use attittud_core::decomposition::ControlParams;
use attittud_core::model::{Activation, MlpConfig};
use attittud_core::tasks::{
    generate_conflict_pair, load_csv_task, ConflictSpec, CsvSchema, Provenance, TaskPair,
};
use attittud_core::trainer::{BasisSpec, TrainConfig};
use attittud_core::BasisKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: String,
    pub task: TaskSource,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum TaskSource {
    Generator {
        spec: ConflictSpec,
        seed: u64,
        /// Restrict the primary train split to this many examples per class.
        #[serde(default)]
        primary_per_class: Option<usize>,
        #[serde(default)]
        subsample_seed: u64,
    },
    Csv {
        primary: CsvSource,
        auxiliary: CsvSource,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: String,
    pub label_column: String,
    pub schema: CsvSchema,
}

/// Architecture; input width and head sizes come from the task data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

/// Sweep axes; each defaults to the single value from `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub k: Option<Vec<usize>>,
    #[serde(default)]
    pub m: Option<Vec<usize>>,
    /// Auxiliary triples `[eta_perp, eta_plus, eta_minus]`; `eta_prim` is
    /// taken from `train.eta`.
    #[serde(default)]
    pub eta_presets: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub basis_kinds: Option<Vec<BasisKind>>,
}

/// One sweep cell: a basis/k/m/eta combination. Seeds vary within a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub name: String,
    pub basis_kind: BasisKind,
    pub k: usize,
    pub m: usize,
    pub eta: ControlParams,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn build_tasks(&self) -> anyhow::Result<TaskPair> {
        match &self.task {
            TaskSource::Generator {
                spec,
                seed,
                primary_per_class,
                subsample_seed,
            } => {
                let pair = generate_conflict_pair(spec, *seed)?;
                Ok(match primary_per_class {
                    Some(per_class) => pair.with_low_resource_primary(*per_class, *subsample_seed)?,
                    None => pair,
                })
            }
            TaskSource::Csv { primary, auxiliary } => {
                let p = load_csv_task(&primary.path, &primary.label_column, &primary.schema)?;
                let a = load_csv_task(&auxiliary.path, &auxiliary.label_column, &auxiliary.schema)?;
                Ok(TaskPair {
                    primary: p.task,
                    auxiliary: a.task,
                    provenance: Provenance::Files {
                        primary: p.provenance,
                        auxiliary: a.provenance,
                    },
                })
            }
        }
    }

    pub fn model_config(&self, tasks: &TaskPair) -> MlpConfig {
        MlpConfig {
            input_dim: tasks.primary.dataset.dim(),
            hidden: self.model.hidden.clone(),
            activation: self.model.activation,
            primary_classes: tasks.primary.dataset.n_classes,
            aux_classes: tasks.auxiliary.dataset.n_classes,
            dropout: self.model.dropout,
        }
    }

    /// Cartesian product of the sweep axes (basis x k x m x eta).
    pub fn cells(&self) -> Vec<Cell> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let kinds = sweep
            .basis_kinds
            .unwrap_or_else(|| vec![self.train.basis.kind]);
        let ks = sweep.k.unwrap_or_else(|| vec![self.train.basis.k]);
        let ms = sweep
            .m
            .unwrap_or_else(|| vec![self.train.jacobian_sample_count]);
        let etas: Vec<ControlParams> = sweep
            .eta_presets
            .map(|presets| {
                presets
                    .iter()
                    .map(|&[p, q, r]| {
                        ControlParams::aux(p, q, r).with_eta_prim(self.train.eta.eta_prim)
                    })
                    .collect()
            })
            .unwrap_or_else(|| vec![self.train.eta]);

        let mut cells = Vec::new();
        for &kind in &kinds {
            for &k in &ks {
                for &m in &ms {
                    for &eta in &etas {
                        let index = cells.len();
                        let name = format!(
                            "cell-{index:03}-{}-k{k}-m{m}-eta{}_{}_{}",
                            kind_slug(kind),
                            fmt_eta(eta.eta_perp),
                            fmt_eta(eta.eta_plus),
                            fmt_eta(eta.eta_minus),
                        );
                        cells.push(Cell {
                            index,
                            name,
                            basis_kind: kind,
                            k,
                            m,
                            eta,
                        });
                    }
                }
            }
        }
        cells
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.sweep
            .as_ref()
            .and_then(|s| s.seeds.clone())
            .unwrap_or_else(|| vec![self.train.seed])
    }

    /// The train config specialized to one cell and seed.
    pub fn cell_train_config(&self, cell: &Cell, seed: u64) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.basis = BasisSpec {
            kind: cell.basis_kind,
            k: cell.k,
        };
        cfg.jacobian_sample_count = cell.m;
        cfg.eta = cell.eta;
        cfg.seed = seed;
        cfg
    }
}

fn kind_slug(kind: BasisKind) -> &'static str {
    match kind {
        BasisKind::RandomizedSvd => "rsvd",
        BasisKind::Random => "random",
        BasisKind::UnitAvgGrad => "unitavg",
        BasisKind::Canonical => "canonical",
    }
}

fn fmt_eta(v: f64) -> String {
    let s = format!("{v}");
    s.replace('.', "p")
}
