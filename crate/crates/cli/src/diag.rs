//! Diagnostics aggregation: per-basis-kind medians and interquartile ranges
//! of the norm fractions captured by the subspace, across all steps of all
//! runs under a directory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};

use attittud_core::decomposition::StepDiagnostics;

use crate::config::Cell;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    pub basis: String,
    pub records: usize,
    pub norm_fraction_prim_median: f64,
    pub norm_fraction_prim_iqr: f64,
    pub norm_fraction_aux_median: f64,
    pub norm_fraction_aux_iqr: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn median_iqr(values: &mut Vec<f64>) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
    let median = quantile(values, 0.5);
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    (median, iqr)
}

/// Scans `run_dir` for `diagnostics-*.jsonl` streams, labels each by the
/// basis kind of its cell (from `cells.json`, falling back to the directory
/// name), and aggregates per basis kind.
pub fn summarize(run_dir: &Path) -> anyhow::Result<Vec<DiagRow>> {
    let cells: Vec<Cell> = match std::fs::read_to_string(run_dir.join("cells.json")) {
        Ok(text) => serde_json::from_str(&text).context("cells.json is malformed")?,
        Err(_) => Vec::new(),
    };
    let kind_of_dir = |dir_name: &str| -> String {
        cells
            .iter()
            .find(|c| c.name == dir_name)
            .map(|c| format!("{:?}", c.basis_kind))
            .unwrap_or_else(|| dir_name.to_string())
    };

    let mut prim: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut aux: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();

    let mut stack = vec![run_dir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir)
            .with_context(|| format!("cannot read {}", dir.display()))?;
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            if !(name.starts_with("diagnostics-") && name.ends_with(".jsonl")) {
                continue;
            }
            let parent = path
                .parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let kind = kind_of_dir(&parent);
            let text = std::fs::read_to_string(&path)?;
            for line in text.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: StepDiagnostics = serde_json::from_str(line)
                    .with_context(|| format!("bad record in {}", path.display()))?;
                prim.entry(kind.clone())
                    .or_default()
                    .push(record.norm_fraction_prim);
                aux.entry(kind.clone())
                    .or_default()
                    .push(record.norm_fraction_aux);
                *counts.entry(kind.clone()).or_default() += 1;
            }
        }
    }

    if counts.is_empty() {
        bail!(
            "missing diagnostics: no diagnostics-*.jsonl streams under {}",
            run_dir.display()
        );
    }

    let mut rows = Vec::new();
    for (kind, count) in counts {
        let mut p = prim.remove(&kind).unwrap_or_default();
        let mut a = aux.remove(&kind).unwrap_or_default();
        let (pm, pi) = median_iqr(&mut p);
        let (am, ai) = median_iqr(&mut a);
        rows.push(DiagRow {
            basis: kind,
            records: count,
            norm_fraction_prim_median: pm,
            norm_fraction_prim_iqr: pi,
            norm_fraction_aux_median: am,
            norm_fraction_aux_iqr: ai,
        });
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[DiagRow]) -> String {
    let mut out = String::from(
        "basis,records,norm_fraction_prim_median,norm_fraction_prim_iqr,\
         norm_fraction_aux_median,norm_fraction_aux_iqr\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.basis,
            r.records,
            r.norm_fraction_prim_median,
            r.norm_fraction_prim_iqr,
            r.norm_fraction_aux_median,
            r.norm_fraction_aux_iqr
        ));
    }
    out
}
