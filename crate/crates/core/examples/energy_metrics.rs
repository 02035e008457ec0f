//! Hidden-layer firing rates and activation AUC of a pretrained encoder on the test split.

use ccgnn::cli::fold_splits;
use ccgnn::features::{synth_av_generate, SynthConfig};
use ccgnn::trainer::{activation_auc, encode, prepare_fold, pretrain_ssl, seeded_encoder, ModelKind, RunConfig};

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
            widths: vec![64, 32],
            ssl_epochs: 100,
            ..RunConfig::default()
        };
        let data = prepare_fold(&ds, &fold, cfg.k)?;
        let trained = pretrain_ssl(&data.train, seeded_encoder(&cfg, ds.audio_dim(), ds.visual_dim()), &cfg)?;
        let enc = encode(&trained.params, &data.test)?;
        let layer = enc.trace.hidden_layer();
        let (audio, visual) = enc.trace.hidden_rates()?;
        println!(
            "{model}: layer {} ({} neurons, threshold {})",
            layer.name,
            audio.len(),
            layer.threshold
        );
        println!(
            "  AUC audio {:.2}  visual {:.2}",
            activation_auc(&audio)?,
            activation_auc(&visual)?
        );
        let rounded: Vec<String> = audio.iter().take(8).map(|r| format!("{r:.2}")).collect();
        println!("  first audio rates {}", rounded.join(" "));
    }
    Ok(())
}
