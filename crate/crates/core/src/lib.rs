//! Auxiliary-gradient decomposition for primary-task-aware training.
//!
//! The central operation splits an auxiliary-task gradient into components
//! that help, hurt, or do not affect a primary task — measured inside a
//! low-rank subspace spanned by per-example primary-task gradients — and
//! reweights each component before descent. The crate provides:
//!
//! - [`linalg`]: Gram-Schmidt, Gaussian sketching, randomized low-rank
//!   row-space approximation, and an exact-SVD verification oracle;
//! - [`model`]: a small feed-forward classifier with reverse-mode
//!   differentiation exposing per-example and weighted-batch gradients;
//! - [`decomposition`]: the gradient split/reweight operations, basis
//!   strategies, and a PCGrad reference implementation;
//! - [`trainer`]: training schedules (multitask, pretrain/finetune, PCGrad,
//!   surrogate-gradient pretraining) with clipping, plateau decay, and early
//!   stopping;
//! - [`tasks`]: synthetic conflict-pair generation, CSV ingestion, and
//!   low-resource subsampling;
//! - [`verify`]: one-command property suites over the invariants above.

pub mod decomposition;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod tasks;
pub mod trainer;
pub mod verify;

pub use decomposition::{
    attittud_surrogate, decompose, pcgrad_reference, reweight, BasisKind, BasisStrategy,
    ControlParams, DecomposedGradient,
};
pub use linalg::{DenseMatrix, SketchMatrix, SubspaceBasis};
pub use model::{Batch, MlpConfig, MlpModel, ParamMask, ParamVector, TaskId};
pub use tasks::{ConflictSpec, Dataset, TaskPair};
pub use trainer::{RunRecord, TrainConfig};
