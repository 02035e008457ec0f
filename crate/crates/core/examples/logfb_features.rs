//! Log filterbank features of a harmonic tone, clean and mixed with noise at 0 dB.

use ccgnn::features::{add_noise_snr, logfb_extract, synth_noise, LogFbConfig, NoiseKind, Waveform};
use ccgnn::seed::rng_for;

fn main() -> ccgnn::Result<()> {
    let cfg = LogFbConfig::default();
    let len = 11_000;
    let tone: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / cfg.sample_rate;
            (1..=8)
                .map(|h| (std::f64::consts::TAU * 150.0 * h as f64 * t).sin() / h as f64)
                .sum()
        })
        .collect();
    let clean = Waveform::new(cfg.sample_rate, tone)?;
    let mut rng = rng_for(7, &[0]);
    let noise = synth_noise(NoiseKind::Babble, 2 * len, cfg.sample_rate, &mut rng)?;
    let noisy = add_noise_snr(&clean, &noise, 0.0, &mut rng)?;

    let c = logfb_extract(&clean, &cfg)?.frames;
    let n = logfb_extract(&noisy, &cfg)?.frames;
    println!("{} samples -> {} frames x {} filters", len, c.rows(), c.cols());
    println!("filter  clean   noisy");
    for m in 0..c.cols() {
        println!("{m:>6}  {:>6.2}  {:>6.2}", c[(0, m)], n[(0, m)]);
    }
    Ok(())
}
