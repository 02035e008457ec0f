//! The model × k × fold comparison grid.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{load_dataset, split_folds, AVDataset, Fold};
use crate::seed::{derive_seed, rng_for};
use crate::trainer::reports::{activation_rows, auc_table, evaluation_row, mse_table, summarize, write_csv};
use crate::trainer::{evaluate_fold, FoldReport, ModelKind, RunConfig};

/// Train / validation / test proportions of every fold.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.6, 0.2, 0.2);
/// Stream label for fold assignment.
const STREAM_FOLDS: u64 = 10;

/// Everything `compare` needs; `run` supplies the shared hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub data: PathBuf,
    pub models: Vec<ModelKind>,
    pub ks: Vec<usize>,
    pub folds: Vec<usize>,
    pub fold_count: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    pub run: RunConfig,
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.ks.is_empty() || self.folds.is_empty() {
            return Err(Error::Config("manifest needs at least one model, k and fold".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::Config("k values must be positive".into()));
        }
        if let Some(f) = self.folds.iter().find(|f| **f >= self.fold_count) {
            return Err(Error::Config(format!(
                "fold {f} out of range for {} folds",
                self.fold_count
            )));
        }
        if !self.data.is_dir() {
            return Err(Error::Config(format!(
                "dataset directory {} does not exist",
                self.data.display()
            )));
        }
        self.run.validate()
    }

    /// `(model, k, fold)` cells in output order.
    pub fn cells(&self) -> Vec<(ModelKind, usize, usize)> {
        let mut cells = Vec::new();
        for &model in &self.models {
            for &k in &self.ks {
                for &fold in &self.folds {
                    cells.push((model, k, fold));
                }
            }
        }
        cells
    }

    /// Hyperparameters of one cell. The seed depends on the cell so cells are
    /// independent, while fold assignment depends only on the manifest seed so
    /// every model and k sees the same splits.
    pub fn cell_config(&self, model: ModelKind, k: usize, fold: usize) -> RunConfig {
        RunConfig {
            model,
            k,
            seed: derive_seed(self.seed, &[model.id(), k as u64, fold as u64]),
            folds: vec![fold],
            fold_count: self.fold_count,
            ..self.run.clone()
        }
    }
}

/// Fold assignment shared by every cell of a manifest with this `seed`.
pub fn fold_splits(sequences: usize, fold_count: usize, seed: u64) -> Result<Vec<Fold>> {
    Ok(split_folds(sequences, fold_count, SPLIT_RATIOS, &mut rng_for(seed, &[STREAM_FOLDS]))?.folds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub model: ModelKind,
    pub k: usize,
    pub fold: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct CompareOutcome {
    pub reports: Vec<FoldReport>,
    pub failures: Vec<CellFailure>,
    pub files: Vec<PathBuf>,
}

fn history_name(kind: &str, r: &FoldReport) -> String {
    format!("{kind}_{}_k{}_fold{}.csv", r.model, r.k, r.fold)
}

/// Runs every cell on a worker pool and writes the report files into
/// `manifest.out`. A failing cell is recorded and the rest still run.
pub fn run_compare(manifest: &ExperimentManifest) -> Result<CompareOutcome> {
    manifest.validate()?;
    let ds = load_dataset(&manifest.data)?;
    run_compare_on(manifest, &ds)
}

/// [`run_compare`] on an already loaded dataset (`manifest.data` is not read).
pub fn run_compare_on(manifest: &ExperimentManifest, ds: &AVDataset) -> Result<CompareOutcome> {
    let folds = fold_splits(ds.sequences.len(), manifest.fold_count, manifest.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cells = manifest.cells();
    let results: Vec<std::result::Result<FoldReport, CellFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(model, k, fold)| {
                let cfg = manifest.cell_config(model, k, fold);
                evaluate_fold(ds, &folds[fold], &cfg)
                    .map(|o| o.report)
                    .map_err(|e| CellFailure {
                        model,
                        k,
                        fold,
                        message: e.to_string(),
                    })
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(f) => failures.push(f),
        }
    }
    let files = write_reports(&manifest.out, &reports, &failures)?;
    Ok(CompareOutcome {
        reports,
        failures,
        files,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::binio::write_atomic(path, text.as_bytes())
}

/// Writes evaluation, activation and summary CSVs, per-cell histories, both
/// text tables and, when cells failed, `failures.txt`.
pub fn write_reports(out: &Path, reports: &[FoldReport], failures: &[CellFailure]) -> Result<Vec<PathBuf>> {
    let hist = out.join("history");
    fs::create_dir_all(&hist)?;
    let mut files = Vec::new();
    let mut put = |p: PathBuf| {
        files.push(p.clone());
        p
    };
    let rows: Vec<_> = reports.iter().map(evaluation_row).collect();
    write_csv(&put(out.join("evaluation.csv")), &rows)?;
    if !reports.is_empty() {
        write_csv(&put(out.join("activation.csv")), &activation_rows(reports))?;
        let summary = summarize(reports);
        write_csv(&put(out.join("summary.csv")), &summary)?;
        write_text(&put(out.join("table_mse.txt")), &mse_table(&summary))?;
        write_text(&put(out.join("table_auc.txt")), &auc_table(&summary))?;
    }
    for r in reports {
        write_csv(&put(hist.join(history_name("ssl", r))), &r.ssl_history)?;
        write_csv(&put(hist.join(history_name("head", r))), &r.head_history)?;
    }
    let failed = out.join("failures.txt");
    if failures.is_empty() {
        if failed.exists() {
            fs::remove_file(&failed)?;
        }
    } else {
        let text: String = failures
            .iter()
            .map(|f| format!("{} k={} fold={}: {}\n", f.model, f.k, f.fold, f.message))
            .collect();
        write_text(&put(failed), &text)?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> ExperimentManifest {
        ExperimentManifest {
            data: PathBuf::from("."),
            models: ModelKind::ALL.to_vec(),
            ks: vec![3, 5],
            folds: vec![0, 1],
            fold_count: 2,
            seed: 4,
            out: PathBuf::from("."),
            jobs: 1,
            run: RunConfig::default(),
        }
    }

    #[test]
    fn full_grid_has_320_cells() {
        let m = ExperimentManifest {
            ks: crate::trainer::DEFAULT_KS.to_vec(),
            folds: (0..20).collect(),
            fold_count: 20,
            ..manifest()
        };
        assert_eq!(m.cells().len(), 320);
    }

    #[test]
    fn cell_seeds_are_distinct_and_folds_shared() {
        let m = manifest();
        let mut seeds: Vec<u64> = m
            .cells()
            .iter()
            .map(|&(mo, k, f)| m.cell_config(mo, k, f).seed)
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 8);
        assert_eq!(fold_splits(10, 2, 4).unwrap(), fold_splits(10, 2, 4).unwrap());
    }

    #[test]
    fn manifest_validation() {
        let m = manifest();
        assert!(ExperimentManifest {
            ks: vec![0],
            ..m.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentManifest {
            folds: vec![2],
            ..m.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentManifest {
            data: PathBuf::from("/nonexistent/x"),
            ..m
        }
        .validate()
        .is_err());
    }
}
