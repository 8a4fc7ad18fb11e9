//! Sweep execution: one run per (cell, seed), outputs written atomically as
//! each run finishes, then an aggregate summary with mean and standard
//! deviation over seeds per cell.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use attittud_core::trainer::{diagnostics_to_jsonl, run_strategy, RunRecord};

use crate::config::{Cell, ExperimentConfig};

/// Environment variable overriding the output root: when set, the config's
/// `output_dir` is resolved relative to it.
pub const OUTPUT_ROOT_ENV: &str = "ATTITTUD_OUT";

pub fn resolve_output_dir(config_output_dir: &str) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(config_output_dir),
        None => PathBuf::from(config_output_dir),
    }
}

/// Write via a temp file in the same directory plus rename, so a killed run
/// can never leave a truncated file at the final path.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

/// Aggregate over seeds for one cell.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub cell: Cell,
    pub seeds: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_test_loss: f64,
    pub std_test_loss: f64,
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize_cell(cell: &Cell, records: &[RunRecord]) -> CellSummary {
    let accs: Vec<f64> = records.iter().map(|r| r.primary_test.accuracy).collect();
    let losses: Vec<f64> = records.iter().map(|r| r.primary_test.loss).collect();
    let (mean_acc, std_acc) = mean_and_std(&accs);
    let (mean_loss, std_loss) = mean_and_std(&losses);
    CellSummary {
        cell: cell.clone(),
        seeds: records.len(),
        mean_test_accuracy: mean_acc,
        std_test_accuracy: std_acc,
        mean_test_loss: mean_loss,
        std_test_loss: std_loss,
    }
}

pub fn summary_csv(summaries: &[CellSummary]) -> String {
    let mut out = String::from(
        "cell,basis,k,m,eta_perp,eta_plus,eta_minus,eta_prim,seeds,\
         mean_test_accuracy,std_test_accuracy,mean_test_loss,std_test_loss\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{},{:?},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.cell.name,
            s.cell.basis_kind,
            s.cell.k,
            s.cell.m,
            s.cell.eta.eta_perp,
            s.cell.eta.eta_plus,
            s.cell.eta.eta_minus,
            s.cell.eta.eta_prim,
            s.seeds,
            s.mean_test_accuracy,
            s.std_test_accuracy,
            s.mean_test_loss,
            s.std_test_loss
        ));
    }
    out
}

/// Executes every sweep cell sequentially. Per-run artifacts land as soon
/// as each run completes, so a failure partway preserves partial results.
pub fn execute(config: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let tasks = config.build_tasks()?;
    let model_cfg = config.model_config(&tasks);
    let cells = config.cells();
    let seeds = config.seeds();

    let out_root = resolve_output_dir(&config.output_dir);
    fs::create_dir_all(&out_root)?;
    write_atomic(
        &out_root.join("manifest.json"),
        tasks.manifest_json().as_bytes(),
    )?;
    write_atomic(
        &out_root.join("cells.json"),
        serde_json::to_string_pretty(&cells)?.as_bytes(),
    )?;

    let mut summaries = Vec::with_capacity(cells.len());
    for cell in &cells {
        let cell_dir = out_root.join(&cell.name);
        fs::create_dir_all(&cell_dir)?;
        let mut records = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let cfg = config.cell_train_config(cell, seed);
            let output = run_strategy(&cfg, &model_cfg, &tasks)?;
            let mut record = output.record;

            let diag_path = cell_dir.join(format!("diagnostics-seed{seed}.jsonl"));
            if !output.diagnostics.is_empty() {
                write_atomic(
                    &diag_path,
                    diagnostics_to_jsonl(&output.diagnostics).as_bytes(),
                )?;
                record.diagnostics_path = Some(diag_path.display().to_string());
            }
            write_atomic(
                &cell_dir.join(format!("run-seed{seed}.json")),
                serde_json::to_string_pretty(&record)?.as_bytes(),
            )?;
            write_atomic(
                &cell_dir.join(format!("metrics-seed{seed}.csv")),
                record.metrics_csv().as_bytes(),
            )?;
            write_atomic(
                &cell_dir.join(format!("model-seed{seed}.json")),
                output.model.to_checkpoint_json().as_bytes(),
            )?;
            records.push(record);
        }
        summaries.push(summarize_cell(cell, &records));
    }

    write_atomic(
        &out_root.join("summary.csv"),
        summary_csv(&summaries).as_bytes(),
    )?;
    Ok(out_root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("data.csv");
        write_atomic(&target, b"a,b\n1,2\n").unwrap();
        assert_eq!(fs::read_to_string(&target).unwrap(), "a,b\n1,2\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .filter(|n| n.to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn mean_and_std_hand_check() {
        let (mean, std) = mean_and_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((mean - 2.5).abs() < 1e-15);
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (mean1, std1) = mean_and_std(&[7.0]);
        assert_eq!((mean1, std1), (7.0, 0.0));
    }
}
