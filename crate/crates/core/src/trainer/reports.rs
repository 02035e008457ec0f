//! CSV rows and text tables derived from fold reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{activation_auc, wilcoxon_signed_rank, FoldReport, ModelKind, ALPHA};
use crate::binio::write_atomic;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationRow {
    pub fold: usize,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub test_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActivationRow {
    pub model: ModelKind,
    pub k: usize,
    pub modality: &'static str,
    pub neuron_id: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: ModelKind,
    pub k: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub auc_audio: f64,
    pub auc_visual: f64,
    /// Two-sided p against the other model at the same `k`, paired by fold.
    pub wilcoxon_p: Option<f64>,
}

/// Serializes `rows` with a header line and writes the file atomically.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    write_atomic(path, &bytes)
}

pub fn evaluation_row(r: &FoldReport) -> EvaluationRow {
    EvaluationRow {
        fold: r.fold,
        model: r.model,
        k: r.k,
        seed: r.seed,
        test_mse: r.test_mse,
    }
}

fn group(reports: &[FoldReport]) -> BTreeMap<(ModelKind, usize), Vec<&FoldReport>> {
    let mut g: BTreeMap<(ModelKind, usize), Vec<&FoldReport>> = BTreeMap::new();
    for r in reports {
        g.entry((r.model, r.k)).or_default().push(r);
    }
    for v in g.values_mut() {
        v.sort_by_key(|r| r.fold);
    }
    g
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for a single value.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn mean_rates(rs: &[Vec<f64>]) -> Vec<f64> {
    let width = rs[0].len();
    (0..width)
        .map(|j| rs.iter().map(|r| r[j]).sum::<f64>() / rs.len() as f64)
        .collect()
}

/// Fold-averaged per-neuron rates, one block of rows per (model, k, modality).
pub fn activation_rows(reports: &[FoldReport]) -> Vec<ActivationRow> {
    let mut rows = Vec::new();
    for ((model, k), rs) in group(reports) {
        for (modality, pick) in [
            (
                "audio",
                (|r: &FoldReport| r.rates_audio.clone()) as fn(&FoldReport) -> Vec<f64>,
            ),
            ("visual", |r: &FoldReport| r.rates_visual.clone()),
        ] {
            let rates = mean_rates(&rs.iter().map(|r| pick(r)).collect::<Vec<_>>());
            rows.extend(rates.into_iter().enumerate().map(|(neuron_id, rate)| ActivationRow {
                model,
                k,
                modality,
                neuron_id,
                rate,
            }));
        }
    }
    rows
}

/// One row per (model, k), ordered by model then k.
pub fn summarize(reports: &[FoldReport]) -> Vec<SummaryRow> {
    let groups = group(reports);
    groups
        .iter()
        .map(|(&(model, k), rs)| {
            let mses: Vec<f64> = rs.iter().map(|r| r.test_mse).collect();
            let rate_a = mean_rates(&rs.iter().map(|r| r.rates_audio.clone()).collect::<Vec<_>>());
            let rate_v = mean_rates(&rs.iter().map(|r| r.rates_visual.clone()).collect::<Vec<_>>());
            let wilcoxon_p = groups
                .iter()
                .find(|(&(m, kk), _)| m != model && kk == k)
                .and_then(|(_, other)| {
                    let theirs: BTreeMap<usize, f64> = other.iter().map(|r| (r.fold, r.test_mse)).collect();
                    let (a, b): (Vec<f64>, Vec<f64>) = rs
                        .iter()
                        .filter_map(|r| theirs.get(&r.fold).map(|t| (r.test_mse, *t)))
                        .unzip();
                    wilcoxon_signed_rank(&a, &b).ok().map(|w| w.p_two_sided)
                });
            SummaryRow {
                model,
                k,
                mse_mean: mean(&mses),
                mse_std: sample_std(&mses),
                auc_audio: activation_auc(&rate_a).unwrap_or(f64::NAN),
                auc_visual: activation_auc(&rate_v).unwrap_or(f64::NAN),
                wilcoxon_p,
            }
        })
        .collect()
}

fn by_k(summary: &[SummaryRow]) -> (Vec<ModelKind>, BTreeMap<usize, BTreeMap<ModelKind, &SummaryRow>>) {
    let mut models: Vec<ModelKind> = summary.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    let mut rows: BTreeMap<usize, BTreeMap<ModelKind, &SummaryRow>> = BTreeMap::new();
    for r in summary {
        rows.entry(r.k).or_default().insert(r.model, r);
    }
    (models, rows)
}

/// Mean ± std test MSE per k and model. `*` marks the lowest mean in a row
/// when its Wilcoxon test against the other model is significant at 5%.
pub fn mse_table(summary: &[SummaryRow]) -> String {
    let (models, rows) = by_k(summary);
    let mut out = String::from("k");
    for m in &models {
        write!(out, "\t{m}").unwrap();
    }
    out.push('\n');
    for (k, cells) in rows {
        let best = cells
            .values()
            .min_by(|a, b| a.mse_mean.total_cmp(&b.mse_mean))
            .filter(|r| cells.len() > 1 && r.wilcoxon_p.is_some_and(|p| p < ALPHA))
            .map(|r| r.model);
        write!(out, "{k}").unwrap();
        for m in &models {
            match cells.get(m) {
                Some(r) => {
                    let flag = if best == Some(*m) { "*" } else { "" };
                    write!(out, "\t{:.4}±{:.4}{flag}", r.mse_mean, r.mse_std).unwrap()
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}

/// Hidden-block activation AUC per k, model and modality.
pub fn auc_table(summary: &[SummaryRow]) -> String {
    let (models, rows) = by_k(summary);
    let mut out = String::from("k");
    for m in &models {
        write!(out, "\t{m}.audio\t{m}.visual").unwrap();
    }
    out.push('\n');
    for (k, cells) in rows {
        write!(out, "{k}").unwrap();
        for m in &models {
            match cells.get(m) {
                Some(r) => write!(out, "\t{:.1}\t{:.1}", r.auc_audio, r.auc_visual).unwrap(),
                None => out.push_str("\t-\t-"),
            }
        }
        out.push('\n');
    }
    out
}
