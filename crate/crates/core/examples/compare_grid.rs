//! A small model x k x fold comparison written as CSV reports and text tables.
//!
//! Usage: cargo run --release --example compare_grid -- [out_dir]

use std::path::PathBuf;

use ccgnn::cli::{run_compare_on, ExperimentManifest};
use ccgnn::features::{synth_av_generate, SynthConfig};
use ccgnn::trainer::{ModelKind, RunConfig};

fn main() -> ccgnn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ccgnn-example-compare"));
    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 20,
            ..SynthConfig::default()
        },
        1,
    )?;
    let manifest = ExperimentManifest {
        data: PathBuf::new(),
        models: ModelKind::ALL.to_vec(),
        ks: vec![3, 10],
        folds: vec![0, 1],
        fold_count: 2,
        seed: 1,
        out: out.clone(),
        jobs: 0,
        run: RunConfig {
            widths: vec![32, 16],
            ssl_epochs: 100,
            head_epochs: 500,
            ..RunConfig::default()
        },
    };
    let outcome = run_compare_on(&manifest, &ds)?;
    for r in &outcome.reports {
        println!(
            "{:<8} k={:<2} fold {}  test MSE {:.5}  baseline {:.5}",
            r.model, r.k, r.fold, r.test_mse, r.baseline_mse
        );
    }
    println!("{}", std::fs::read_to_string(out.join("table_mse.txt"))?);
    println!("{} files under {}", outcome.files.len(), out.display());
    Ok(())
}
