//! Task suppliers: synthetic primary/auxiliary pairs with controllable
//! gradient conflict, CSV ingestion with train-split standardization, and
//! deterministic low-resource subsampling.

mod csv_io;
mod generate;

pub use csv_io::{load_csv_task, write_csv_task, CsvSchema, LoadedCsvTask};
pub use generate::generate_conflict_pair;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::seed::substream;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task spec: {0}")]
    SpecInvalid(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("class {class} has {have} examples, need {need}")]
    InsufficientExamples {
        class: usize,
        have: usize,
        need: usize,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A labelled dataset: `n x d` features plus class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, n_classes: usize) -> Result<Self, TaskError> {
        if features.rows() != labels.len() {
            return Err(TaskError::SpecInvalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(TaskError::SpecInvalid(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows selected by index, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Disjoint train/val/test index lists covering a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Seeded shuffle of `0..n` cut at the given fractions.
    pub fn random(n: usize, fractions: [f64; 3], seed: u64) -> Result<Self, TaskError> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(TaskError::SpecInvalid(format!(
                "split fractions {fractions:?} must be nonnegative and sum to 1"
            )));
        }
        use rand::seq::SliceRandom;
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = substream(seed, "split", 0);
        indices.shuffle(&mut rng);
        let n_train = (n as f64 * fractions[0]).round() as usize;
        let n_val = (n as f64 * fractions[1]).round() as usize;
        let n_train = n_train.min(n);
        let n_val = n_val.min(n - n_train);
        let train = indices[..n_train].to_vec();
        let val = indices[n_train..n_train + n_val].to_vec();
        let test = indices[n_train + n_val..].to_vec();
        Ok(SplitIndices { train, val, test })
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Dataset plus its split.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub dataset: Dataset,
    pub split: SplitIndices,
}

impl TaskData {
    pub fn train_view(&self) -> Dataset {
        self.dataset.select(&self.split.train)
    }

    pub fn val_view(&self) -> Dataset {
        self.dataset.select(&self.split.val)
    }

    pub fn test_view(&self) -> Dataset {
        self.dataset.select(&self.split.test)
    }
}

/// Where a task pair came from; hashes validate file-based inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Generator { name: String, seed: u64 },
    Files {
        primary: FileProvenance,
        auxiliary: FileProvenance,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileProvenance {
    pub path: String,
    pub content_hash: String,
}

/// A primary task and the auxiliary task serving it.
#[derive(Debug, Clone)]
pub struct TaskPair {
    pub primary: TaskData,
    pub auxiliary: TaskData,
    pub provenance: Provenance,
}

impl TaskPair {
    /// JSON manifest recording provenance (and hashes for file inputs).
    pub fn manifest_json(&self) -> String {
        #[derive(Serialize)]
        struct Manifest<'a> {
            provenance: &'a Provenance,
            primary_examples: usize,
            primary_classes: usize,
            auxiliary_examples: usize,
            auxiliary_classes: usize,
        }
        serde_json::to_string_pretty(&Manifest {
            provenance: &self.provenance,
            primary_examples: self.primary.dataset.len(),
            primary_classes: self.primary.dataset.n_classes,
            auxiliary_examples: self.auxiliary.dataset.len(),
            auxiliary_classes: self.auxiliary.dataset.n_classes,
        })
        .expect("manifest serializes")
    }

    /// Restricts the primary train split to `per_class` examples per class,
    /// stratified and seeded. Val/test splits are untouched.
    pub fn with_low_resource_primary(&self, per_class: usize, seed: u64) -> Result<TaskPair, TaskError> {
        let train_labels: Vec<usize> = self
            .primary
            .split
            .train
            .iter()
            .map(|&i| self.primary.dataset.labels[i])
            .collect();
        let keep = stratified_sample(
            &train_labels,
            self.primary.dataset.n_classes,
            per_class,
            seed,
        )?;
        let train: Vec<usize> = keep.iter().map(|&pos| self.primary.split.train[pos]).collect();
        let mut out = self.clone();
        out.primary.split.train = train;
        Ok(out)
    }
}

/// Positions (not values) of a stratified, seeded, without-replacement
/// sample: `per_class` picks from every class.
fn stratified_sample(
    labels: &[usize],
    n_classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<Vec<usize>, TaskError> {
    use rand::seq::SliceRandom;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (pos, &label) in labels.iter().enumerate() {
        by_class[label].push(pos);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(TaskError::InsufficientExamples {
                class,
                have: members.len(),
                need: per_class,
            });
        }
    }
    let mut rng = substream(seed, "subsample", 0);
    let mut keep = Vec::with_capacity(n_classes * per_class);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..per_class]);
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Stratified, seeded subsample of a dataset, without replacement.
pub fn subsample_low_resource(
    dataset: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<Dataset, TaskError> {
    let keep = stratified_sample(&dataset.labels, dataset.n_classes, per_class, seed)?;
    Ok(dataset.select(&keep))
}

/// Conflict-pair generator parameters. The helpful fraction of the shared
/// feature block carries label structure aligned across tasks; the
/// conflicting fraction carries anti-aligned structure; the remainder is
/// pure noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictSpec {
    pub shared_feature_dim: usize,
    pub helpful_fraction: f64,
    pub conflicting_fraction: f64,
    pub noise_scale: f64,
    pub n_primary: usize,
    pub n_aux: usize,
}

impl ConflictSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.shared_feature_dim == 0 {
            return Err(TaskError::SpecInvalid("shared_feature_dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.helpful_fraction)
            || !(0.0..=1.0).contains(&self.conflicting_fraction)
        {
            return Err(TaskError::SpecInvalid("fractions must lie in [0,1]".into()));
        }
        if self.helpful_fraction + self.conflicting_fraction > 1.0 + 1e-12 {
            return Err(TaskError::SpecInvalid(
                "helpful_fraction + conflicting_fraction must be <= 1".into(),
            ));
        }
        if !self.noise_scale.is_finite() || self.noise_scale < 0.0 {
            return Err(TaskError::SpecInvalid("noise_scale must be finite and >= 0".into()));
        }
        if self.n_primary < 4 || self.n_aux < 4 {
            return Err(TaskError::SpecInvalid("need at least 4 examples per task".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_dataset(n: usize, classes: usize) -> Dataset {
        let features = DenseMatrix::new(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        Dataset::new(features, labels, classes).unwrap()
    }

    #[test]
    fn subsample_full_class_size_is_permutation() {
        let ds = toy_dataset(10, 2);
        let sub = subsample_low_resource(&ds, 5, 3).unwrap();
        assert_eq!(sub.len(), 10);
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| sub.features.row(i).to_vec()).collect();
        rows.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[0], (2 * i) as f64);
        }
    }

    #[test]
    fn subsample_one_per_class() {
        let ds = toy_dataset(9, 3);
        let sub = subsample_low_resource(&ds, 1, 5).unwrap();
        assert_eq!(sub.len(), 3);
        let mut seen = sub.labels.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);
    }

    #[test]
    fn subsample_is_seed_deterministic() {
        let ds = toy_dataset(20, 4);
        let a = subsample_low_resource(&ds, 2, 7).unwrap();
        let b = subsample_low_resource(&ds, 2, 7).unwrap();
        assert_eq!(a, b);
        let c = subsample_low_resource(&ds, 2, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn subsample_rejects_undersized_class() {
        let ds = toy_dataset(5, 2); // class 1 has 2 members
        let err = subsample_low_resource(&ds, 3, 0).unwrap_err();
        assert!(matches!(err, TaskError::InsufficientExamples { class: 1, .. }));
    }

    proptest! {
        #[test]
        fn splits_are_disjoint_and_cover(n in 3usize..200, seed in 0u64..1000) {
            let split = SplitIndices::random(n, [0.5, 0.2, 0.3], seed).unwrap();
            let mut all: Vec<usize> = split
                .train
                .iter()
                .chain(&split.val)
                .chain(&split.test)
                .copied()
                .collect();
            all.sort_unstable();
            let expected: Vec<usize> = (0..n).collect();
            prop_assert_eq!(all, expected);
        }
    }
}
