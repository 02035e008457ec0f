//! Audio features, noise mixing, the synthetic audio-visual corpus, and fold splits.

mod folds;
mod io;
mod logfb;
mod noise;
mod synth;

pub use folds::{split_folds, Fold, FoldSplits};
pub use io::{
    decode_sequence, encode_sequence, load_dataset, load_manifest, save_dataset, DatasetManifest, SequenceEntry,
    DATASET_MAGIC, DATASET_VERSION, MANIFEST_FILE,
};
pub use logfb::{
    frame_signal, hz_to_mel, logfb_extract, mel_to_hz, BinLayout, FeatureSequence, LogFbConfig, LogFbExtractor,
};
pub use noise::{add_noise_snr, mean_power, synth_noise, NoiseKind};
pub use synth::{latent_trajectory, mean_abs_cross_correlation, synth_av_generate, AVDataset, AVSequence, SynthConfig};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(invalid("waveform has no samples"));
        }
        Ok(Self { sample_rate, samples })
    }
}
