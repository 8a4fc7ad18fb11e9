//! Small feed-forward classifier with reverse-mode differentiation.
//!
//! The model is a shared trunk of dense layers plus one linear head per task
//! (primary, auxiliary). Parameters live in one flat `f64` vector whose
//! layout names whole layers, so gradients, masks, and checkpoints all share
//! the same coordinate space. Besides plain batch gradients it exposes
//! per-example gradients (Jacobian rows) and weighted-batch gradients — the
//! latter computes `w^T J` in a single backward pass without materializing
//! the Jacobian, which is what the sketched subspace path relies on.

mod checkpoint;
mod mlp;

pub use mlp::{DropoutMask, MlpModel, DEFAULT_JACOBIAN_CAP};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite activation encountered")]
    NonFiniteActivation,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes (example {index})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("per-example Jacobian with {m} rows exceeds cap {cap}")]
    JacobianTooLarge { m: usize, cap: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint malformed: {0}")]
    MalformedCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Primary,
    Auxiliary,
}

/// Mini-batch for one task.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: DenseMatrix,
    pub labels: Vec<usize>,
    pub task: TaskId,
}

impl Batch {
    pub fn new(inputs: DenseMatrix, labels: Vec<usize>, task: TaskId) -> Result<Self, ModelError> {
        if inputs.rows() == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if inputs.rows() != labels.len() {
            return Err(ModelError::DimensionMismatch {
                expected: inputs.rows(),
                got: labels.len(),
            });
        }
        if !inputs.is_finite() {
            return Err(ModelError::NonFiniteActivation);
        }
        Ok(Batch {
            inputs,
            labels,
            task,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }
}

/// One named span of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered flattening of all model parameters. Offsets partition `[0, D)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub entries: Vec<LayoutEntry>,
    pub total: usize,
}

impl ParamLayout {
    pub fn from_entries(entries: Vec<LayoutEntry>) -> Self {
        let mut offset = 0;
        for e in &entries {
            assert_eq!(e.offset, offset, "layout entries must be contiguous");
            offset += e.len();
        }
        ParamLayout {
            entries,
            total: offset,
        }
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Flat parameter (or gradient) vector tied to a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<ParamLayout>) -> Result<Self, ModelError> {
        if values.len() != layout.total {
            return Err(ModelError::DimensionMismatch {
                expected: layout.total,
                got: values.len(),
            });
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.total];
        ParamVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    /// Slice of the span named by `entry`.
    pub fn span(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .entry(name)
            .map(|e| &self.values[e.range()])
    }
}

/// Boolean mask over parameter coordinates, built from whole layers only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamMask {
    bits: Vec<bool>,
}

impl ParamMask {
    pub fn all(layout: &ParamLayout) -> Self {
        ParamMask {
            bits: vec![true; layout.total],
        }
    }

    pub fn none(layout: &ParamLayout) -> Self {
        ParamMask {
            bits: vec![false; layout.total],
        }
    }

    /// Marks exactly the layers for which `keep` returns true.
    pub fn from_layer_filter(layout: &ParamLayout, keep: impl Fn(&str) -> bool) -> Self {
        let mut bits = vec![false; layout.total];
        for e in &layout.entries {
            if keep(&e.name) {
                bits[e.range()].fill(true);
            }
        }
        ParamMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Indices of masked (decomposed) coordinates, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Architecture hyper-parameters; dimensions come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub primary_classes: usize,
    pub aux_classes: usize,
    /// Per-unit dropout rate on trunk activations; 0 disables.
    #[serde(default)]
    pub dropout: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        ParamLayout::from_entries(vec![
            LayoutEntry {
                name: "trunk.0.weight".into(),
                rows: 2,
                cols: 3,
                offset: 0,
            },
            LayoutEntry {
                name: "trunk.0.bias".into(),
                rows: 2,
                cols: 1,
                offset: 6,
            },
        ])
    }

    #[test]
    fn layout_partitions_range() {
        let l = layout();
        assert_eq!(l.total, 8);
        assert_eq!(l.entry("trunk.0.bias").unwrap().range(), 6..8);
    }

    #[test]
    fn mask_is_layer_granular() {
        let l = layout();
        let m = ParamMask::from_layer_filter(&l, |name| name.ends_with("bias"));
        assert_eq!(m.count(), 2);
        assert_eq!(m.indices(), vec![6, 7]);
    }

    #[test]
    fn batch_rejects_bad_shapes() {
        let inputs = DenseMatrix::zeros(2, 3);
        assert!(Batch::new(inputs.clone(), vec![0], TaskId::Primary).is_err());
        assert!(Batch::new(inputs, vec![0, 1], TaskId::Primary).is_ok());
    }
}
