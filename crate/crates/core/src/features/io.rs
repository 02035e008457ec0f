//! On-disk dataset layout: `manifest.toml` plus one `.avds` file per sequence.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::synth::{AVDataset, AVSequence, SynthConfig};
use crate::binio::{check_magic, read_array, read_u32, write_array, write_atomic};
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"AVDS";
pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub file: String,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub sequences: usize,
    pub frames: usize,
    pub total_samples: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub config: SynthConfig,
    pub sequence: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn describe(ds: &AVDataset) -> Self {
        Self {
            format_version: DATASET_VERSION,
            seed: ds.seed,
            sequences: ds.sequences.len(),
            frames: ds.frames(),
            total_samples: ds.total_samples(),
            audio_dim: ds.audio_dim(),
            visual_dim: ds.visual_dim(),
            config: ds.config.clone(),
            sequence: ds
                .sequences
                .iter()
                .enumerate()
                .map(|(i, s)| SequenceEntry {
                    file: format!("seq_{i:05}.avds"),
                    snr_db: s.snr_db,
                })
                .collect(),
        }
    }
}

pub fn encode_sequence(s: &AVSequence) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    write_array(&mut buf, "clean", &s.clean)?;
    write_array(&mut buf, "noisy", &s.noisy)?;
    write_array(&mut buf, "visual", &s.visual)?;
    Ok(buf)
}

pub fn decode_sequence(path: &Path, snr_db: f64) -> Result<AVSequence> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, DATASET_MAGIC)?;
    let version = read_u32(&mut r, "version")?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported dataset version {version} (expected {DATASET_VERSION})",
            path.display()
        )));
    }
    let (mut clean, mut noisy, mut visual) = (None, None, None);
    while let Some((name, m)) = read_array(&mut r)? {
        match name.as_str() {
            "clean" => clean = Some(m),
            "noisy" => noisy = Some(m),
            "visual" => visual = Some(m),
            _ => {}
        }
    }
    let need =
        |m: Option<Matrix>, n: &str| m.ok_or_else(|| Error::Format(format!("{}: missing array {n}", path.display())));
    Ok(AVSequence {
        clean: need(clean, "clean")?,
        noisy: need(noisy, "noisy")?,
        visual: need(visual, "visual")?,
        snr_db,
    })
}

pub fn save_dataset(dir: &Path, ds: &AVDataset) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest::describe(ds);
    for (entry, s) in manifest.sequence.iter().zip(&ds.sequences) {
        write_atomic(&dir.join(&entry.file), &encode_sequence(s)?)?;
    }
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))
}

pub fn load_dataset(dir: &Path) -> Result<AVDataset> {
    let manifest = load_manifest(dir)?;
    let sequences = manifest
        .sequence
        .iter()
        .map(|e| decode_sequence(&dir.join(&e.file), e.snr_db))
        .collect::<Result<Vec<_>>>()?;
    if sequences.len() != manifest.sequences {
        return Err(Error::Format(
            "manifest sequence count disagrees with its file list".into(),
        ));
    }
    Ok(AVDataset {
        config: manifest.config,
        seed: manifest.seed,
        sequences,
    })
}
