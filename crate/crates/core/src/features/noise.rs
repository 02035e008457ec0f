use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{invalid, Result};

pub fn mean_power(samples: &[f64]) -> f64 {
    samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64
}

/// Mixes a random contiguous segment of `noise` into `clean`, scaled so that
/// `10·log10(P_clean / P_noise) = snr_db`.
pub fn add_noise_snr<R: Rng + ?Sized>(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    rng: &mut R,
) -> Result<Waveform> {
    if !snr_db.is_finite() {
        return Err(invalid("SNR must be finite"));
    }
    if (clean.sample_rate - noise.sample_rate).abs() > 1e-9 {
        return Err(invalid("clean and noise sample rates differ"));
    }
    let n = clean.samples.len();
    if noise.samples.len() < n {
        return Err(invalid(format!(
            "noise has {} samples, clean needs {n}",
            noise.samples.len()
        )));
    }
    let p_clean = mean_power(&clean.samples);
    if p_clean == 0.0 {
        return Err(invalid("clean signal has zero power"));
    }
    let offset = rng.random_range(0..=noise.samples.len() - n);
    let segment = &noise.samples[offset..offset + n];
    let p_noise = mean_power(segment);
    if p_noise == 0.0 {
        return Err(invalid("noise segment has zero power"));
    }
    let alpha = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean.samples.iter().zip(segment).map(|(c, v)| c + alpha * v).collect();
    Waveform::new(clean.sample_rate, samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// Several amplitude-modulated harmonic "talkers" summed together.
    Babble,
}

pub fn synth_noise<R: Rng + ?Sized>(kind: NoiseKind, len: usize, sample_rate: f64, rng: &mut R) -> Result<Waveform> {
    let samples = match kind {
        NoiseKind::White => (0..len).map(|_| StandardNormal.sample(rng)).collect(),
        NoiseKind::Babble => {
            let mut out = vec![0.0; len];
            let tau = 2.0 * std::f64::consts::PI;
            for _ in 0..6 {
                let f0: f64 = rng.random_range(90.0..260.0);
                let am_rate: f64 = rng.random_range(2.0..7.0);
                let am_phase: f64 = rng.random_range(0.0..tau);
                let partials: Vec<(f64, f64, f64)> = (1..=10)
                    .map(|h| {
                        (
                            f0 * h as f64,
                            rng.random_range(0.2..1.0) / h as f64,
                            rng.random_range(0.0..tau),
                        )
                    })
                    .filter(|(f, _, _)| *f < sample_rate / 2.0)
                    .collect();
                for (i, o) in out.iter_mut().enumerate() {
                    let t = i as f64 / sample_rate;
                    let env = 0.5 * (1.0 + (tau * am_rate * t + am_phase).sin());
                    let s: f64 = partials.iter().map(|(f, a, p)| a * (tau * f * t + p).sin()).sum();
                    *o += env * s;
                }
            }
            for o in &mut out {
                *o += 0.05 * Distribution::<f64>::sample(&StandardNormal, rng);
            }
            out
        }
    };
    Waveform::new(sample_rate, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn realized_snr(clean: &Waveform, mixed: &Waveform) -> f64 {
        let resid: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
        10.0 * (mean_power(&clean.samples) / mean_power(&resid)).log10()
    }

    #[test]
    fn requested_snr_is_realized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clean = Waveform::new(
            16_000.0,
            (0..4000)
                .map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.21).cos())
                .collect(),
        )
        .unwrap();
        let noise = synth_noise(NoiseKind::White, 6000, 16_000.0, &mut rng).unwrap();
        for snr in [-12.0, -6.0, 0.0, 6.0, 12.0] {
            let mixed = add_noise_snr(&clean, &noise, snr, &mut rng).unwrap();
            assert!((realized_snr(&clean, &mixed) - snr).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_db_equalizes_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let clean = Waveform::new(8000.0, (0..1000).map(|i| ((i % 17) as f64 - 8.0) / 8.0).collect()).unwrap();
        let noise = synth_noise(NoiseKind::Babble, 1000, 8000.0, &mut rng).unwrap();
        let mixed = add_noise_snr(&clean, &noise, 0.0, &mut rng).unwrap();
        let resid: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
        let (pc, pn) = (mean_power(&clean.samples), mean_power(&resid));
        assert!((pc - pn).abs() / pc < 1e-9);
    }

    #[test]
    fn twelve_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = Waveform::new(8000.0, vec![0.5, -0.5, 0.25, 1.0]).unwrap();
        let noise = Waveform::new(8000.0, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let mixed = add_noise_snr(&clean, &noise, 12.0, &mut rng).unwrap();
        let resid: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
        let want = mean_power(&clean.samples) / 10f64.powf(1.2);
        assert!((mean_power(&resid) - want).abs() / want < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let silent = Waveform::new(8000.0, vec![0.0; 10]).unwrap();
        let noise = Waveform::new(8000.0, vec![1.0; 10]).unwrap();
        assert!(add_noise_snr(&silent, &noise, 0.0, &mut rng).is_err());
        assert!(add_noise_snr(&noise, &silent, 0.0, &mut rng).is_err());
        let short = Waveform::new(8000.0, vec![1.0; 5]).unwrap();
        assert!(add_noise_snr(&noise, &short, 0.0, &mut rng).is_err());
    }
}
