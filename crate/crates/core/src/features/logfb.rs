use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::diffmath::Matrix;
use crate::error::{invalid, Result};

/// Which FFT bins feed the filterbank.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinLayout {
    /// Bins `1..=fft_size/2` (DC dropped): 2048 bins for a 4096-point FFT.
    PositiveOnly,
    /// Bins `0..=fft_size/2`: 1025 bins for a 2048-point FFT.
    WithDc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogFbConfig {
    pub sample_rate: f64,
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub bin_layout: BinLayout,
    pub num_filters: usize,
    /// Energies are clamped to this before the logarithm.
    pub floor: f64,
}

impl Default for LogFbConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22_050.0,
            frame_length: 800,
            hop: 500,
            fft_size: 4096,
            bin_layout: BinLayout::PositiveOnly,
            num_filters: 22,
            floor: 1e-10,
        }
    }
}

impl LogFbConfig {
    /// Number of whole frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            (len - self.frame_length) / self.hop + 1
        }
    }
}

/// Framed feature matrix, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub frames: Matrix,
    pub frame_length: usize,
    pub hop: usize,
}

/// Splits `w` into overlapping frames; row `m` holds samples
/// `[m·hop, m·hop + frame_length)`. The trailing remainder is dropped.
pub fn frame_signal(w: &Waveform, frame_length: usize, hop: usize) -> Result<Matrix> {
    if frame_length == 0 || hop == 0 {
        return Err(invalid("frame length and hop must be positive"));
    }
    let len = w.samples.len();
    if len < frame_length {
        return Err(invalid(format!(
            "signal of {len} samples is shorter than one {frame_length}-sample frame"
        )));
    }
    let m = (len - frame_length) / hop + 1;
    let mut data = Vec::with_capacity(m * frame_length);
    for i in 0..m {
        data.extend_from_slice(&w.samples[i * hop..i * hop + frame_length]);
    }
    Matrix::from_vec(m, frame_length, data)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable extractor: FFT plan, Hamming window and triangular mel filters.
pub struct LogFbExtractor {
    config: LogFbConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Filter edges in Hz: filter `m` spans `edges[m]..edges[m+2]`, peak at `edges[m+1]`.
    edges: Vec<f64>,
    /// Sparse `(bin, weight)` rows, one per filter.
    filters: Vec<Vec<(usize, f64)>>,
}

impl LogFbExtractor {
    pub fn new(config: LogFbConfig) -> Result<Self> {
        if !(config.sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        if config.frame_length == 0 || config.hop == 0 || config.num_filters == 0 {
            return Err(invalid("frame length, hop and filter count must be positive"));
        }
        if config.fft_size < config.frame_length {
            return Err(invalid(format!(
                "FFT size {} is smaller than the frame length {}",
                config.fft_size, config.frame_length
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        let n = config.frame_length;
        let window = (0..n)
            .map(|i| {
                if n == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()
                }
            })
            .collect();

        let nyquist = config.sample_rate / 2.0;
        let top = hz_to_mel(nyquist);
        let points = config.num_filters + 2;
        let edges: Vec<f64> = (0..points)
            .map(|i| mel_to_hz(top * i as f64 / (points - 1) as f64))
            .collect();

        let bins: Vec<usize> = match config.bin_layout {
            BinLayout::PositiveOnly => (1..=config.fft_size / 2).collect(),
            BinLayout::WithDc => (0..=config.fft_size / 2).collect(),
        };
        let bin_hz = config.sample_rate / config.fft_size as f64;
        let filters = (0..config.num_filters)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                bins.iter()
                    .filter_map(|&b| {
                        let f = b as f64 * bin_hz;
                        let w = if f > lo && f <= mid {
                            (f - lo) / (mid - lo)
                        } else if f > mid && f < hi {
                            (hi - f) / (hi - mid)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((b, w))
                    })
                    .collect()
            })
            .collect();

        Ok(Self {
            config,
            fft,
            window,
            edges,
            filters,
        })
    }

    pub fn config(&self) -> &LogFbConfig {
        &self.config
    }

    /// Peak frequency of filter `m` (0-based).
    pub fn center_frequency(&self, m: usize) -> f64 {
        self.edges[m + 1]
    }

    pub fn extract(&self, w: &Waveform) -> Result<FeatureSequence> {
        if (w.sample_rate - self.config.sample_rate).abs() > 1e-9 {
            return Err(invalid(format!(
                "waveform sampled at {} Hz, extractor expects {} Hz",
                w.sample_rate, self.config.sample_rate
            )));
        }
        let frames = frame_signal(w, self.config.frame_length, self.config.hop)?;
        let nf = self.config.num_filters;
        let mut out = Matrix::zeros(frames.rows(), nf);
        let mut buf = vec![Complex::new(0.0, 0.0); self.config.fft_size];
        for r in 0..frames.rows() {
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = match frames.row(r).get(i) {
                    Some(x) => Complex::new(x * self.window[i], 0.0),
                    None => Complex::new(0.0, 0.0),
                };
            }
            self.fft.process(&mut buf);
            for (m, filter) in self.filters.iter().enumerate() {
                let energy: f64 = filter.iter().map(|&(b, wt)| wt * buf[b].norm_sqr()).sum();
                out[(r, m)] = energy.max(self.config.floor).ln();
            }
        }
        Ok(FeatureSequence {
            frames: out,
            frame_length: self.config.frame_length,
            hop: self.config.hop,
        })
    }
}

/// Log filterbank energies, one row per frame.
pub fn logfb_extract(w: &Waveform, config: &LogFbConfig) -> Result<FeatureSequence> {
    LogFbExtractor::new(config.clone())?.extract(w)
}
