//! Self-supervised pretraining of both encoders on the same training split.

use ccgnn::cli::fold_splits;
use ccgnn::features::{synth_av_generate, SynthConfig};
use ccgnn::trainer::{prepare_fold, pretrain_ssl, seeded_encoder, ModelKind, RunConfig};

fn main() -> ccgnn::Result<()> {
    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 10,
            ..SynthConfig::default()
        },
        0,
    )?;
    let fold = fold_splits(10, 1, 0)?.remove(0);
    for model in ModelKind::ALL {
        let cfg = RunConfig {
            model,
            widths: vec![32, 16],
            ..RunConfig::default()
        };
        let data = prepare_fold(&ds, &fold, cfg.k)?;
        let init = seeded_encoder(&cfg, ds.audio_dim(), ds.visual_dim());
        let out = pretrain_ssl(&data.train, init, &cfg)?;
        println!("{model}:");
        for r in out.history.iter().step_by(40).chain(out.history.last()) {
            println!(
                "  epoch {:>3}  total {:.5}  invariance {:.5}  decorrelation {:.3}",
                r.epoch, r.loss_total, r.loss_invariance, r.loss_decorrelation
            );
        }
    }
    Ok(())
}
