//! Synthetic audio-visual corpus.
//!
//! A smooth latent trajectory per sequence drives both a harmonic waveform
//! (whose log filterbank becomes the clean audio stream) and a noisy linear
//! projection (the visual stream). The noisy audio stream is the same
//! waveform mixed with white or babble noise at a random SNR.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logfb::{hz_to_mel, LogFbConfig, LogFbExtractor};
use super::noise::{add_noise_snr, synth_noise, NoiseKind};
use super::Waveform;
use crate::diffmath::Matrix;
use crate::error::{invalid, Result};
use crate::seed::rng_for;

/// Cosine terms (over the mel axis) in each latent dimension's spectral envelope.
const ENVELOPE_TERMS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sequences: usize,
    pub frames: usize,
    pub latent_dim: usize,
    pub visual_dim: usize,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Standard deviation of the independent noise added to visual features.
    pub visual_noise: f64,
    pub logfb: LogFbConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sequences: 50,
            frames: 48,
            latent_dim: 4,
            visual_dim: 50,
            snr_min_db: -12.0,
            snr_max_db: 12.0,
            visual_noise: 0.1,
            logfb: LogFbConfig::default(),
        }
    }
}

impl SynthConfig {
    /// Waveform length giving exactly `frames` analysis frames.
    pub fn samples_per_sequence(&self) -> usize {
        (self.frames - 1) * self.logfb.hop + self.logfb.frame_length
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences == 0 || self.frames == 0 || self.latent_dim == 0 || self.visual_dim == 0 {
            return Err(invalid(
                "sequence count, frames, latent and visual dims must be positive",
            ));
        }
        if !(self.snr_min_db <= self.snr_max_db) {
            return Err(invalid("snr_min_db must not exceed snr_max_db"));
        }
        if !(self.visual_noise >= 0.0) {
            return Err(invalid("visual noise must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AVSequence {
    /// `frames x num_filters` log filterbank of the clean waveform.
    pub clean: Matrix,
    /// `frames x num_filters` log filterbank of the noisy mixture.
    pub noisy: Matrix,
    /// `frames x visual_dim`.
    pub visual: Matrix,
    pub snr_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AVDataset {
    pub config: SynthConfig,
    pub seed: u64,
    pub sequences: Vec<AVSequence>,
}

impl AVDataset {
    pub fn frames(&self) -> usize {
        self.config.frames
    }

    pub fn total_samples(&self) -> usize {
        self.sequences.len() * self.config.frames
    }

    pub fn audio_dim(&self) -> usize {
        self.sequences
            .first()
            .map_or(self.config.logfb.num_filters, |s| s.clean.cols())
    }

    pub fn visual_dim(&self) -> usize {
        self.sequences
            .first()
            .map_or(self.config.visual_dim, |s| s.visual.cols())
    }
}

/// Dataset-wide random maps from latent space to spectral envelopes and visual features.
struct LatentMaps {
    /// `latent_dim x ENVELOPE_TERMS` cosine coefficients.
    envelope: Matrix,
    visual: Matrix,
    /// Fundamental shared by every sequence ("one speaker").
    f0: f64,
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        scale * Distribution::<f64>::sample(&StandardNormal, rng)
    })
}

/// Velocity persistence and position pull of the latent walk.
const LATENT_MOMENTUM: f64 = 0.5;
const LATENT_PULL: f64 = 0.6;
/// Frames discarded so each sequence starts from the walk's stationary regime.
const LATENT_BURN_IN: usize = 20;

/// Random walk with momentum and a pull towards zero, rescaled to unit stationary variance.
/// The correlation time is a few frames, so one sequence sweeps much of latent space.
pub fn latent_trajectory<R: Rng + ?Sized>(frames: usize, dim: usize, rng: &mut R) -> Matrix {
    let (a, b) = (LATENT_MOMENTUM, LATENT_PULL);
    // Stationary variance of pos for unit-variance velocity noise (AR(2) with phi1 = a + b, phi2 = -ab).
    let (p1, p2) = (a + b, -a * b);
    let var = (1.0 - p2) / ((1.0 + p2) * ((1.0 - p2).powi(2) - p1 * p1));
    let norm = var.sqrt().recip();
    let mut z = Matrix::zeros(frames, dim);
    let mut pos = vec![0.0; dim];
    let mut vel = vec![0.0; dim];
    for t in 0..LATENT_BURN_IN + frames {
        for d in 0..dim {
            let eps: f64 = StandardNormal.sample(rng);
            vel[d] = a * vel[d] + eps;
            pos[d] = b * pos[d] + vel[d];
            if t >= LATENT_BURN_IN {
                z[(t - LATENT_BURN_IN, d)] = norm * pos[d];
            }
        }
    }
    z
}

/// Log-amplitude of a partial at `hz` per unit of each latent dimension:
/// a smooth curve over the mel axis, so neighbouring partials move together.
fn envelope_row(maps: &LatentMaps, hz: f64, nyquist: f64) -> Vec<f64> {
    let x = hz_to_mel(hz) / hz_to_mel(nyquist);
    (0..maps.envelope.rows())
        .map(|j| {
            (0..ENVELOPE_TERMS)
                .map(|q| maps.envelope[(j, q)] * (std::f64::consts::PI * q as f64 * x).cos())
                .sum()
        })
        .collect()
}

/// Every harmonic of a slightly jittered shared fundamental below Nyquist,
/// with frame-rate amplitudes `0.1·exp(0.8·envelope·z)` interpolated per sample.
fn harmonic_waveform<R: Rng + ?Sized>(cfg: &SynthConfig, maps: &LatentMaps, z: &Matrix, rng: &mut R) -> Vec<f64> {
    let sr = cfg.logfb.sample_rate;
    let nyquist = sr / 2.0;
    let n = cfg.samples_per_sequence();
    let f0 = maps.f0 * rng.random_range(0.98..1.02);
    let hop = cfg.logfb.hop as f64;
    let centre0 = cfg.logfb.frame_length as f64 / 2.0;
    let last = (cfg.frames - 1) as f64;
    let tau = 2.0 * std::f64::consts::PI;

    let freqs: Vec<f64> = (1..)
        .map(|m| m as f64 * f0)
        .take_while(|f| *f < 0.95 * nyquist)
        .collect();
    let phases: Vec<f64> = freqs.iter().map(|_| rng.random_range(0.0..tau)).collect();
    let env = Matrix::from_rows(
        &freqs
            .iter()
            .map(|&f| envelope_row(maps, f, nyquist))
            .collect::<Vec<_>>(),
    );
    let amp = z
        .matmul_t(&env)
        .expect("latent dims agree")
        .map(|la| 0.1 * (0.8 * la).exp());

    (0..n)
        .map(|s| {
            let u = ((s as f64 - centre0) / hop).clamp(0.0, last);
            let t0 = u.floor() as usize;
            let t1 = (t0 + 1).min(cfg.frames - 1);
            let frac = u - t0 as f64;
            let time = s as f64 / sr;
            let (a0, a1) = (amp.row(t0), amp.row(t1));
            freqs
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (&f, &phase))| ((1.0 - frac) * a0[h] + frac * a1[h]) * (tau * f * time + phase).sin())
                .sum()
        })
        .collect()
}

fn generate_sequence(
    cfg: &SynthConfig,
    maps: &LatentMaps,
    extractor: &LogFbExtractor,
    seed: u64,
    index: usize,
) -> Result<AVSequence> {
    let mut rng = rng_for(seed, &[1, index as u64]);
    let z = latent_trajectory(cfg.frames, cfg.latent_dim, &mut rng);

    let clean = Waveform::new(cfg.logfb.sample_rate, harmonic_waveform(cfg, maps, &z, &mut rng))?;

    let mut visual = z.matmul_t(&maps.visual)?;
    for v in visual.as_mut_slice() {
        *v += cfg.visual_noise * Distribution::<f64>::sample(&StandardNormal, &mut rng);
    }

    let kind = if index.is_multiple_of(2) {
        NoiseKind::White
    } else {
        NoiseKind::Babble
    };
    let noise_len = clean.samples.len() + cfg.logfb.sample_rate as usize / 2;
    let noise = synth_noise(kind, noise_len, cfg.logfb.sample_rate, &mut rng)?;
    let snr_db = if cfg.snr_max_db > cfg.snr_min_db {
        rng.random_range(cfg.snr_min_db..cfg.snr_max_db)
    } else {
        cfg.snr_min_db
    };
    let noisy = add_noise_snr(&clean, &noise, snr_db, &mut rng)?;

    Ok(AVSequence {
        clean: extractor.extract(&clean)?.frames,
        noisy: extractor.extract(&noisy)?.frames,
        visual,
        snr_db,
    })
}

/// Generates the corpus; a pure function of `(config, seed)`.
pub fn synth_av_generate(config: &SynthConfig, seed: u64) -> Result<AVDataset> {
    config.validate()?;
    let mut rng = rng_for(seed, &[0]);
    let maps = LatentMaps {
        envelope: normal_matrix(
            config.latent_dim,
            ENVELOPE_TERMS,
            1.0 / (config.latent_dim as f64).sqrt(),
            &mut rng,
        ),
        visual: normal_matrix(config.visual_dim, config.latent_dim, 1.0, &mut rng),
        f0: rng.random_range(100.0..200.0),
    };
    let extractor = LogFbExtractor::new(config.logfb.clone())?;
    let sequences = (0..config.sequences)
        .into_par_iter()
        .map(|i| generate_sequence(config, &maps, &extractor, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(AVDataset {
        config: config.clone(),
        seed,
        sequences,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Mean absolute Pearson correlation over every (column of `a`, column of `b`) pair.
pub fn mean_abs_cross_correlation(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(crate::Error::Shape {
            op: "cross_correlation",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let bc: Vec<Vec<f64>> = (0..b.cols()).map(|j| b.column(j)).collect();
    let mut total = 0.0;
    for i in 0..a.cols() {
        let ac = a.column(i);
        total += bc.iter().map(|col| pearson(&ac, col).abs()).sum::<f64>();
    }
    Ok(total / (a.cols() * b.cols()) as f64)
}
