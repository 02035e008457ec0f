//! Generates a synthetic audio-visual dataset and writes it to disk.
//!
//! Usage: cargo run --example generate_dataset -- [out_dir]

use std::path::PathBuf;

use ccgnn::features::{load_dataset, save_dataset, synth_av_generate, SynthConfig};

fn main() -> ccgnn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ccgnn-example-data"));
    let config = SynthConfig {
        sequences: 10,
        ..SynthConfig::default()
    };
    let ds = synth_av_generate(&config, 0)?;
    let manifest = save_dataset(&out, &ds)?;
    println!("wrote {} sequences to {}", manifest.sequences, out.display());
    println!(
        "{} frames each: audio {} dims, visual {} dims, {} samples in total",
        ds.frames(),
        ds.audio_dim(),
        ds.visual_dim(),
        ds.total_samples()
    );
    for (i, s) in ds.sequences.iter().enumerate() {
        println!("sequence {i}: SNR {:>6.2} dB", s.snr_db);
    }
    let back = load_dataset(&out)?;
    println!("reloaded identical: {}", back.sequences == ds.sequences);
    Ok(())
}
