//! Pretrains an encoder, fits the reconstruction head on frozen features and
//! scores the test split against the predict-the-mean baseline. Checkpoints
//! are written to the directory given as the first argument.

use std::path::PathBuf;

use ccgnn::cli::fold_splits;
use ccgnn::encoders::to_named;
use ccgnn::features::{synth_av_generate, SynthConfig};
use ccgnn::trainer::{evaluate_fold, load_checkpoint, save_checkpoint, ModelKind, RunConfig};

fn main() -> ccgnn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ccgnn-example-head"));
    std::fs::create_dir_all(&out)?;

    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 10,
            ..SynthConfig::default()
        },
        0,
    )?;
    let fold = fold_splits(10, 1, 0)?.remove(0);
    let cfg = RunConfig {
        model: ModelKind::Cortical,
        widths: vec![32, 16],
        ..RunConfig::default()
    };
    let result = evaluate_fold(&ds, &fold, &cfg)?;
    let r = &result.report;
    println!("test sequences {:?}", fold.test);
    println!("best head epoch {} of {}", r.best_head_epoch, cfg.head_epochs);
    println!(
        "test MSE {:.5}  mean baseline {:.5}  ratio {:.3}",
        r.test_mse,
        r.baseline_mse,
        r.test_mse / r.baseline_mse
    );

    let encoder = to_named(|f| result.encoder.visit(&mut |n, m| f(n, m)));
    let head = to_named(|f| result.head.visit("head", &mut |n, m| f(n, m)));
    save_checkpoint(&out.join("encoder.ccgn"), &encoder)?;
    save_checkpoint(&out.join("head.ccgn"), &head)?;
    let reloaded = load_checkpoint(&out.join("encoder.ccgn"))?;
    println!(
        "saved {} encoder arrays to {} (round trip equal: {})",
        encoder.len(),
        out.display(),
        reloaded == encoder
    );
    Ok(())
}
