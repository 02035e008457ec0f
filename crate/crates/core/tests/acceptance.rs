//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Every reference value here is computed by code in this file, independent of
//! the library's own oracle module.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccgnn::diffmath::{column_standardize, Matrix, Tape, Var};
use ccgnn::encoders::{bind_params, cortical_layer_forward, AugmentConfig, CorticalLayer, EncoderParams};
use ccgnn::features::{
    add_noise_snr, logfb_extract, mean_power, save_dataset, synth_av_generate, LogFbConfig, SynthConfig, Waveform,
};
use ccgnn::objectives::{decorrelation_term, CcaConfig};
use ccgnn::seed::rng_for;
use ccgnn::tgraph::build_prior_frame_graph;
use ccgnn::trainer::{
    activation_auc, evaluate_fold, firing_rates, gradcheck_split, init_encoder, ssl_loss, wilcoxon_signed_rank,
    GradCheckSetup, ModelKind, RunConfig, STREAM_AUGMENT, STREAM_ENCODER_INIT,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal by Box-Muller, so the test does not share the library's sampler.
fn gauss(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gauss_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| gauss(r)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// 1. Gradients of the full loss against central differences computed here.

fn gradient_check(model: ModelKind, seed: u64) -> (f64, usize) {
    let setup = GradCheckSetup::default();
    let split = gradcheck_split(&setup, seed).unwrap();
    let mut init_rng = rng_for(seed, &[STREAM_ENCODER_INIT]);
    let template = init_encoder(model, setup.audio_dim, setup.visual_dim, &setup.widths, &mut init_rng);
    let mut flat: Vec<Matrix> = Vec::new();
    template.visit(&mut |_, m: &Matrix| flat.push(m.clone()));
    let cca = CcaConfig { lambda: setup.lambda };
    let augment = AugmentConfig {
        p_edge: 0.2,
        p_feat: 0.2,
    };

    // Rebuilds the tree from `values`, binds it and returns the loss and the leaf handles.
    let evaluate = |values: &[Matrix], tape: &mut Tape| -> (Var, Vec<Var>) {
        let mut it = values.iter();
        let params: EncoderParams = template
            .try_map(&mut |_, _| Ok::<_, ()>(it.next().unwrap().clone()))
            .unwrap();
        let vars = bind_params(tape, &params);
        let mut handles = Vec::new();
        vars.visit(&mut |_, v: &Var| handles.push(*v));
        // Same augmentation draws on every evaluation.
        let loss = ssl_loss(
            tape,
            &vars,
            &split,
            &cca,
            augment,
            &mut rng_for(seed, &[STREAM_AUGMENT]),
        )
        .unwrap();
        (loss.total, handles)
    };
    let loss_at = |values: &[Matrix]| {
        let mut tape = Tape::new();
        let (l, _) = evaluate(values, &mut tape);
        tape.value(l).scalar()
    };

    let mut tape = Tape::new();
    let (loss, handles) = evaluate(&flat, &mut tape);
    let grads = tape.backward(loss).unwrap();
    let l0 = tape.value(loss).scalar();
    let h = setup.step;
    // Central-difference roundoff: values this small cannot be told apart from zero.
    let floor = 16.0 * f64::EPSILON * l0.abs().max(1.0) / h;

    let mut worst = 0.0f64;
    let mut entries = 0;
    for (pi, var) in handles.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &flat[pi]);
        for e in 0..flat[pi].len() {
            let mut plus = flat.clone();
            plus[pi].as_mut_slice()[e] += h;
            let mut minus = flat.clone();
            minus[pi].as_mut_slice()[e] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let a = analytic.as_slice()[e];
            entries += 1;
            if a.abs() <= floor && numeric.abs() <= floor {
                continue;
            }
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
        }
    }
    (worst, entries)
}

fn criterion_gradients() -> Outcome {
    // Seed 0 is the command default, seed 7 the documented example.
    let start = Instant::now();
    let mut worst = Vec::new();
    for model in ModelKind::ALL {
        for seed in [0, 7] {
            let (err, entries) = gradient_check(model, seed);
            worst.push(format!("{model} seed {seed}: {err:.2e} ({entries} entries)"));
            if err >= 1e-4 {
                worst.last_mut().unwrap().push_str(" OVER");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = !worst.iter().any(|w| w.ends_with("OVER")) && secs < 60.0;
    // Not gated: how often a random init point sits where the 1e-6 step's
    // truncation error exceeds the tolerance.
    let over = (100..130)
        .filter(|s| gradient_check(ModelKind::Cortical, *s).0 >= 1e-4)
        .count();
    outcome(
        passed,
        format!(
            "max rel error {}; {secs:.1} s; info: cortical seeds 100..130 over tolerance: {over}/30",
            worst.join(", ")
        ),
    )
}

// 2. Decorrelation term against squared off-diagonal Pearson correlations.

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn criterion_decorrelation() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = gauss_matrix(64, 8, &mut r).map(|v| 3.0 * v + 1.5);
        let cols: Vec<Vec<f64>> = (0..8).map(|c| m.column(c)).collect();
        let mut expected = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    expected += pearson(&cols[i], &cols[j]).powi(2);
                }
            }
        }
        let got = decorrelation_term(&column_standardize(&m).value);
        worst = worst.max((got - expected).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("max abs diff {worst:.2e} over 100 matrices of 64x8"),
    )
}

// 3. Prior-frame graph against enumeration of all node pairs.

fn criterion_graph() -> Outcome {
    let mut bad = Vec::new();
    for n in 1..=20usize {
        for k in 1..=10usize {
            let g = build_prior_frame_graph(n, k).unwrap();
            let got: BTreeMap<(usize, usize), f64> =
                g.edges().iter().map(|e| ((e.source, e.target), e.weight)).collect();
            let mut expected = BTreeMap::new();
            for i in 0..n {
                for j in 0..n {
                    let d = i as i64 - j as i64;
                    if (1..=k as i64).contains(&d) {
                        expected.insert((i, j), (k as i64 + 1 - d) as f64);
                    }
                }
            }
            if got != expected || g.edges().len() != expected.len() {
                bad.push((n, k));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} of 200 (N, k) pairs differ {:?}", bad.len(), bad),
    )
}

// 4. Cortical layer against a scalar evaluation of its gate equations.

fn dot_col(x: &[f64], w: &Matrix, j: usize) -> f64 {
    let mut s = 0.0;
    for (i, xi) in x.iter().enumerate() {
        s += xi * w[(i, j)];
    }
    s
}

fn cortical_by_hand(ha: &Matrix, hv: &Matrix, p: &CorticalLayer, mu0: &[f64], seg: usize) -> (Matrix, Matrix) {
    let (n, f) = ha.shape();
    let mut out_a = Matrix::zeros(n, f);
    let mut out_v = Matrix::zeros(n, f);
    let mut prev = mu0.to_vec();
    for t in 0..n {
        if t % seg == 0 {
            prev = mu0.to_vec();
        }
        let a = ha.row(t);
        let v = hv.row(t);
        let mut joint = a.to_vec();
        joint.extend_from_slice(v);
        let mut raw = vec![0.0; f];
        for j in 0..f {
            let f_m = sigmoid(dot_col(&joint, &p.w_m, j) + p.b_m[(0, j)]);
            let f_w = sigmoid(dot_col(&joint, &p.w_w, j) + p.b_w[(0, j)]);
            let rho = (dot_col(&joint, &p.w_rho, j) + p.b_rho[(0, j)]).tanh();
            raw[j] = f_w * rho + f_m * prev[j];
        }
        for j in 0..f {
            let f_a = sigmoid(dot_col(a, &p.w_a, j) + p.b_a[(0, j)]);
            let f_v = sigmoid(dot_col(v, &p.w_v, j) + p.b_v[(0, j)]);
            let mu = (dot_col(&raw, &p.w_mu, j) + p.b_mu[(0, j)]).tanh();
            out_a[(t, j)] = mu * f_a;
            out_v[(t, j)] = mu * f_v;
        }
        prev = raw;
    }
    (out_a, out_v)
}

fn criterion_cortical() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(1..=12);
        let f = r.random_range(1..=6);
        let seg = r.random_range(1..=n);
        let p = CorticalLayer::zeros(f)
            .try_map("layer", &mut |_, m: &Matrix| {
                Ok::<_, ()>(gauss_matrix(m.rows(), m.cols(), &mut r))
            })
            .unwrap();
        let ha = gauss_matrix(n, f, &mut r);
        let hv = gauss_matrix(n, f, &mut r);
        let mu0 = gauss_matrix(1, f, &mut r);
        let mut tape = Tape::new();
        let a = tape.constant(ha.clone());
        let v = tape.constant(hv.clone());
        let m = tape.constant(mu0.clone());
        let pv = p
            .try_map("layer", &mut |_, w: &Matrix| Ok::<_, ()>(tape.constant(w.clone())))
            .unwrap();
        let out = cortical_layer_forward(&mut tape, a, v, &pv, m, seg).unwrap();
        let (ea, ev) = cortical_by_hand(&ha, &hv, &p, mu0.row(0), seg);
        worst = worst
            .max(tape.value(out.h_a).sub(&ea).unwrap().max_abs())
            .max(tape.value(out.h_v).sub(&ev).unwrap().max_abs());
    }
    outcome(
        worst <= 1e-12,
        format!("max abs diff {worst:.2e} over 50 random layers"),
    )
}

// 5. Memory scan closed forms.

fn scan(omega: &[f64], gate: &[f64], init: f64, seg: usize) -> Vec<f64> {
    let col = |v: &[f64]| Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap();
    let mut t = Tape::new();
    let o = t.constant(col(omega));
    let g = t.constant(col(gate));
    let i = t.constant(Matrix::filled(1, 1, init));
    let out = t.memory_scan(o, g, i, seg).unwrap();
    t.value(out).as_slice().to_vec()
}

fn criterion_scan() -> Outcome {
    let half = scan(&[1.0; 3], &[0.5; 3], 0.0, 3);
    let hold = scan(&[0.0; 5], &[1.0; 5], -0.4, 5);
    let omega = [0.3, -1.2, 0.9, 2.5];
    let forget = scan(&omega, &[0.0; 4], 7.0, 4);
    let sum = scan(&omega, &[1.0; 4], 0.0, 4);
    let ok = half == [1.0, 1.5, 1.75]
        && hold == [-0.4; 5]
        && forget == omega
        && sum == [0.3, 0.3 - 1.2, 0.3 - 1.2 + 0.9, 0.3 - 1.2 + 0.9 + 2.5];
    outcome(
        ok,
        format!("f_m=0.5 gives {half:?}; f_m=1 holds and sums; f_m=0 copies ω"),
    )
}

// 6 and 7. Training on a 10 x 48 synthetic dataset.

fn acceptance_config(model: ModelKind) -> RunConfig {
    RunConfig {
        model,
        k: 3,
        widths: vec![32, 16],
        ssl_epochs: 200,
        ssl_lr: 1e-3,
        lambda: 1e-4,
        head_epochs: 2000,
        head_lr: 0.005,
        head_weight_decay: 0.0004,
        seed: 0,
        ..RunConfig::default()
    }
}

fn criteria_training() -> (Outcome, Outcome) {
    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 10,
            frames: 48,
            ..SynthConfig::default()
        },
        0,
    )
    .unwrap();
    let fold = ccgnn::cli::fold_splits(10, 1, 0).unwrap().remove(0);
    let start = Instant::now();
    let mut ssl = Vec::new();
    let mut reconstruction = None;
    for model in ModelKind::ALL {
        let out = evaluate_fold(&ds, &fold, &acceptance_config(model)).unwrap();
        let h = &out.report.ssl_history;
        let (first, last) = (h[0].loss_total, h[h.len() - 1].loss_total);
        ssl.push((model, first, last));
        if model == ModelKind::Cortical {
            reconstruction = Some((out.report.test_mse, out.report.baseline_mse));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ssl_ok = ssl.iter().all(|(_, a, b)| *b < 0.5 * a) && secs < 300.0;
    let ssl_detail = ssl
        .iter()
        .map(|(m, a, b)| format!("{m} {a:.4} -> {b:.4} ({:.1}%)", 100.0 * b / a))
        .collect::<Vec<_>>()
        .join(", ");
    let (test, base) = reconstruction.unwrap();
    (
        outcome(ssl_ok, format!("{ssl_detail}; both models incl. heads {secs:.1} s")),
        outcome(
            test <= 0.8 * base,
            format!(
                "cortical k=3 test MSE {test:.5} vs mean baseline {base:.5} (ratio {:.3})",
                test / base
            ),
        ),
    )
}

// 8. Firing rates and AUC on a hand-built trace.

fn criterion_metrics() -> Outcome {
    // 4 samples x 3 neurons; threshold 0.5 (gates) and 0 (signed outputs).
    let trace = Matrix::from_rows(&[[0.9, 0.1, 0.5], [0.6, 0.2, 0.7], [0.4, 0.8, 0.51], [0.7, 0.3, -0.2]]);
    let gate = firing_rates(&trace, 0.5).unwrap();
    let signed = firing_rates(&trace, 0.0).unwrap();
    // Neuron 0 exceeds 0.5 three times, neuron 1 once, neuron 2 twice (0.5 itself does not fire).
    let gate_ok = gate == [0.75, 0.25, 0.5];
    let signed_ok = signed == [1.0, 1.0, 0.75];
    // Trapezoids: (0.75 + 0.25)/2 + (0.25 + 0.5)/2 = 0.875.
    let auc_ok = activation_auc(&gate).unwrap() == 0.875 && activation_auc(&[0.3]).unwrap() == 0.0;
    let uniform = activation_auc(&[0.5; 512]).unwrap();
    outcome(
        gate_ok && signed_ok && auc_ok && uniform == 255.5,
        format!("rates {gate:?} / {signed:?}, 512 x 0.5 gives AUC {uniform}"),
    )
}

// 9. Wilcoxon signed-rank against enumeration of every sign assignment.

fn exact_two_sided(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    // Mid-ranks over runs of equal magnitude.
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < d.len() {
        let mut j = i;
        while j + 1 < d.len() && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        for r in &mut ranks[i..=j] {
            *r = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    let plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let stat = plus.min(total - plus);
    let n = d.len();
    let mut at_most = 0u64;
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if w.min(total - w) <= stat + 1e-9 {
            at_most += 1;
        }
    }
    Some((at_most as f64 / (1u64 << n) as f64).min(1.0))
}

fn criterion_wilcoxon() -> Outcome {
    let mut r = rng(9);
    let mut worst = 0.0f64;
    let mut flags = 0;
    let mut compared = 0;
    let mut significant = 0;
    for i in 0..50 {
        let n = 5 + i % 6;
        let shift = [0.0, 0.5, 1.5][i % 3];
        // Non-zero differences on a quarter grid so tied magnitudes occur.
        let b: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let a: Vec<f64> = b
            .iter()
            .map(|x| {
                let step = loop {
                    let s = (gauss(&mut r) * 4.0 + shift * 4.0).round();
                    if s != 0.0 {
                        break s;
                    }
                };
                x + step / 4.0
            })
            .collect();
        let Some(p) = exact_two_sided(&a, &b) else { continue };
        let w = wilcoxon_signed_rank(&a, &b).unwrap();
        compared += 1;
        significant += usize::from(p < 0.05);
        worst = worst.max((p - w.p_two_sided).abs());
        flags += usize::from((p < 0.05) != w.significant);
    }
    outcome(
        worst <= 1e-12 && flags == 0 && compared == 50,
        format!("{compared} datasets, max p diff {worst:.2e}, {flags} flag mismatches, {significant} significant"),
    )
}

// 10. Log filterbank shape, SNR mixing and the silence floor.

fn criterion_signal() -> Outcome {
    let cfg = LogFbConfig::default();
    let mut r = rng(10);
    let mut shapes_ok = true;
    for len in [800usize, 801, 1299, 1300, 4000, 22_050] {
        let w = Waveform::new(cfg.sample_rate, (0..len).map(|_| gauss(&mut r)).collect()).unwrap();
        let f = logfb_extract(&w, &cfg).unwrap().frames;
        shapes_ok &= f.shape() == ((len - 800) / 500 + 1, 22);
    }
    let clean = Waveform::new(cfg.sample_rate, (0..5000).map(|i| (i as f64 * 0.07).sin()).collect()).unwrap();
    let noise = Waveform::new(cfg.sample_rate, (0..9000).map(|_| 0.3 * gauss(&mut r)).collect()).unwrap();
    let mixed = add_noise_snr(&clean, &noise, 0.0, &mut r).unwrap();
    let added: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
    let rel = (mean_power(&added) - mean_power(&clean.samples)).abs() / mean_power(&clean.samples);
    let silent = Waveform::new(cfg.sample_rate, vec![0.0; 3000]).unwrap();
    let floor = logfb_extract(&silent, &cfg).unwrap().frames;
    let floor_ok = floor.as_slice().iter().all(|v| *v == 1e-10f64.ln());
    outcome(
        shapes_ok && rel <= 1e-9 && floor_ok,
        format!("frame counts match (M x 22): {shapes_ok}; 0 dB power mismatch {rel:.2e}; silent rows at ln(1e-10): {floor_ok}"),
    )
}

// 11. `compare` run twice gives byte-identical CSVs.

fn csv_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 10,
            frames: 16,
            ..SynthConfig::default()
        },
        3,
    )
    .unwrap();
    save_dataset(&data, &ds).unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "ssl_epochs = 15\nhead_epochs = 40\nwidths = [8, 4]\n").unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let args = [
            "ccgnn",
            "compare",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--ks",
            "3,5",
            "--fold-count",
            "2",
            "--seed",
            "21",
            "--jobs",
            "0",
        ];
        let code = ccgnn::cli::run(args);
        (code == ExitCode::SUCCESS, csv_files(&out))
    };
    let (ok1, first) = run("first");
    let (ok2, second) = run("second");
    let evaluation_rows = first
        .get("evaluation.csv")
        .map_or(0, |b| b.iter().filter(|c| **c == b'\n').count());
    outcome(
        ok1 && ok2 && evaluation_rows == 9 && !first.is_empty() && first == second,
        format!(
            "{} CSV files, {} evaluation rows, identical: {}",
            first.len(),
            evaluation_rows.saturating_sub(1),
            first == second
        ),
    )
}

fn main() -> ExitCode {
    let (ssl, reconstruction) = criteria_training();
    let results = [
        ("1 gradient check", criterion_gradients()),
        ("2 decorrelation identity", criterion_decorrelation()),
        ("3 prior-frame graph", criterion_graph()),
        ("4 cortical layer transcription", criterion_cortical()),
        ("5 memory scan closed forms", criterion_scan()),
        ("6 self-supervised loss decrease", ssl),
        ("7 reconstruction vs mean baseline", reconstruction),
        ("8 firing rates and AUC", criterion_metrics()),
        ("9 Wilcoxon signed-rank", criterion_wilcoxon()),
        ("10 signal pipeline", criterion_signal()),
        ("11 compare determinism", criterion_determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
