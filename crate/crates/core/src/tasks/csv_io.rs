use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::DenseMatrix;

use super::{Dataset, FileProvenance, SplitIndices, TaskData, TaskError};

/// Declares which columns are numeric features and how to split the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub feature_columns: Vec<String>,
    #[serde(default = "default_split")]
    pub split_fractions: [f64; 3],
    #[serde(default)]
    pub split_seed: u64,
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

/// A parsed, standardized CSV task plus the content hash that validates it.
#[derive(Debug, Clone)]
pub struct LoadedCsvTask {
    pub task: TaskData,
    pub provenance: FileProvenance,
    /// Per-feature standardization statistics, computed on the train split.
    pub train_mean: Vec<f64>,
    pub train_std: Vec<f64>,
}

/// Loads an RFC-4180-style CSV (header row required, UTF-8), parses the
/// declared numeric feature columns, maps the label column's distinct values
/// to class indices (sorted order), splits the rows, and standardizes every
/// feature with the train split's mean and standard deviation.
pub fn load_csv_task(
    path: impl AsRef<Path>,
    label_column: &str,
    schema: &CsvSchema,
) -> Result<LoadedCsvTask, TaskError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let content_hash = format!("{:x}", Sha256::digest(&bytes));

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let headers = reader
        .headers()
        .map_err(|e| TaskError::ParseError {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let label_idx = find(label_column).ok_or_else(|| {
        TaskError::SchemaMismatch(format!("label column {label_column:?} not in header"))
    })?;
    let mut feature_idx = Vec::with_capacity(schema.feature_columns.len());
    for col in &schema.feature_columns {
        let idx = find(col).ok_or_else(|| {
            TaskError::SchemaMismatch(format!("feature column {col:?} not in header"))
        })?;
        feature_idx.push(idx);
    }
    if feature_idx.is_empty() {
        return Err(TaskError::SchemaMismatch("no feature columns declared".into()));
    }

    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TaskError::ParseError {
            line: e
                .position()
                .map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(feature_idx.len());
        for (&idx, col) in feature_idx.iter().zip(&schema.feature_columns) {
            let field = record.get(idx).ok_or_else(|| TaskError::ParseError {
                line,
                message: format!("missing field {col:?}"),
            })?;
            let value: f64 = field.trim().parse().map_err(|_| TaskError::ParseError {
                line,
                message: format!("non-numeric value {field:?} in column {col:?}"),
            })?;
            if !value.is_finite() {
                return Err(TaskError::ParseError {
                    line,
                    message: format!("non-finite value in column {col:?}"),
                });
            }
            row.push(value);
        }
        let label = record.get(label_idx).ok_or_else(|| TaskError::ParseError {
            line,
            message: "missing label field".into(),
        })?;
        raw_rows.push(row);
        raw_labels.push(label.trim().to_string());
    }
    if raw_rows.is_empty() {
        return Err(TaskError::SpecInvalid("CSV has no data rows".into()));
    }

    // Distinct label values map to class indices in sorted order.
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    for l in &raw_labels {
        let next = classes.len();
        classes.entry(l.clone()).or_insert(next);
    }
    let mut sorted: Vec<&String> = classes.keys().collect();
    sorted.sort();
    let class_of: BTreeMap<String, usize> = sorted
        .into_iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), i))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_of[l]).collect();
    let n_classes = class_of.len();

    let n = raw_rows.len();
    let d = feature_idx.len();
    let split = SplitIndices::random(n, schema.split_fractions, schema.split_seed)?;

    // Standardization statistics from the train split only.
    let mut mean = vec![0.0; d];
    for &i in &split.train {
        for (j, &v) in raw_rows[i].iter().enumerate() {
            mean[j] += v;
        }
    }
    let n_train = split.train.len().max(1) as f64;
    for m in &mut mean {
        *m /= n_train;
    }
    let mut var = vec![0.0; d];
    for &i in &split.train {
        for (j, &v) in raw_rows[i].iter().enumerate() {
            let dv = v - mean[j];
            var[j] += dv * dv;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n_train).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0 // constant column: center only
            }
        })
        .collect();

    let mut data = Vec::with_capacity(n * d);
    for row in &raw_rows {
        for j in 0..d {
            data.push((row[j] - mean[j]) / std[j]);
        }
    }
    let features = DenseMatrix::new(n, d, data).expect("csv shape");
    let dataset = Dataset::new(features, labels, n_classes)?;

    Ok(LoadedCsvTask {
        task: TaskData { dataset, split },
        provenance: FileProvenance {
            path: path.display().to_string(),
            content_hash,
        },
        train_mean: mean,
        train_std: std,
    })
}

/// Writes a dataset as CSV with columns `f0..f{d-1},label`. Mostly useful
/// for building fixtures; `load_csv_task` is the inverse up to
/// standardization.
pub fn write_csv_task(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), TaskError> {
    let mut writer =
        csv::Writer::from_path(path.as_ref()).map_err(|e| TaskError::SpecInvalid(e.to_string()))?;
    let d = dataset.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer
        .write_record(&header)
        .map_err(|e| TaskError::SpecInvalid(e.to_string()))?;
    for i in 0..dataset.len() {
        let mut record: Vec<String> = dataset
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v:?}")) // Debug float formatting round-trips
            .collect();
        record.push(dataset.labels[i].to_string());
        writer
            .write_record(&record)
            .map_err(|e| TaskError::SpecInvalid(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
