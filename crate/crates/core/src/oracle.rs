//! Straight-line reference implementations and the `selftest` suite that
//! compares them with the production code paths.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffmath::{column_standardize, Matrix, Tape};
use crate::encoders::{cortical_layer_forward, CorticalLayer, HeadParams};
use crate::error::Result;
use crate::objectives::{decorrelation_term, pearson_offdiag_oracle};
use crate::seed::rng_for;
use crate::tgraph::build_prior_frame_graph;
use crate::trainer::{
    activation_auc, model_gradcheck, wilcoxon_signed_rank, GradCheckSetup, ModelKind, GRADCHECK_TOLERANCE,
};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `Σ_i x[i]·w[i][j] + b[j]` for one row.
fn affine_entry(x: &[f64], w: &Matrix, b: &Matrix, j: usize) -> f64 {
    x.iter().enumerate().map(|(i, xi)| xi * w[(i, j)]).sum::<f64>() + b[(0, j)]
}

/// One cortical layer evaluated entry by entry, node by node.
pub fn cortical_layer_reference(
    h_a: &Matrix,
    h_v: &Matrix,
    p: &CorticalLayer,
    mu_init: &[f64],
    segment_len: usize,
) -> (Matrix, Matrix) {
    let (n, f) = h_a.shape();
    let mut out_a = Matrix::zeros(n, f);
    let mut out_v = Matrix::zeros(n, f);
    let mut memory = mu_init.to_vec();
    for node in 0..n {
        if node % segment_len == 0 {
            memory = mu_init.to_vec();
        }
        let a = h_a.row(node);
        let v = h_v.row(node);
        let av: Vec<f64> = a.iter().chain(v).copied().collect();
        let mut f_a = vec![0.0; f];
        let mut f_v = vec![0.0; f];
        for j in 0..f {
            f_a[j] = sigmoid(affine_entry(a, &p.w_a, &p.b_a, j));
            f_v[j] = sigmoid(affine_entry(v, &p.w_v, &p.b_v, j));
            let f_m = sigmoid(affine_entry(&av, &p.w_m, &p.b_m, j));
            let f_w = sigmoid(affine_entry(&av, &p.w_w, &p.b_w, j));
            let rho = affine_entry(&av, &p.w_rho, &p.b_rho, j).tanh();
            let omega = f_w * rho;
            memory[j] = omega + f_m * memory[j];
        }
        for j in 0..f {
            let mu = affine_entry(&memory, &p.w_mu, &p.b_mu, j).tanh();
            out_a[(node, j)] = mu * f_a[j];
            out_v[(node, j)] = mu * f_v[j];
        }
    }
    (out_a, out_v)
}

/// Every `(source, target, weight)` with `1 ≤ source − target ≤ k`, found by
/// testing all ordered node pairs.
pub fn prior_frame_edges_brute(n: usize, k: usize) -> Vec<(usize, usize, f64)> {
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if s > t && s - t <= k {
                edges.push((s, t, (k + 1 - (s - t)) as f64));
            }
        }
    }
    edges
}

/// Two-sided Wilcoxon p-value by enumerating all `2^n` sign assignments of
/// the ranked non-zero differences. `None` when every difference is zero.
pub fn wilcoxon_brute_force(a: &[f64], b: &[f64]) -> Option<f64> {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return None;
    }
    // Mid-rank of |d_i|: 1 + #smaller + (#equal − 1)/2.
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let smaller = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect();
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let observed = w_plus.min(total - w_plus);
    let n = d.len();
    let hits = (0u64..1 << n)
        .filter(|mask| {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            w <= observed + 1e-9
        })
        .count();
    Some((2.0 * hits as f64 / (1u64 << n) as f64).min(1.0))
}

/// Outcome of one selftest suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn case(name: &'static str, passed: bool, detail: String) -> SelfTestCase {
    SelfTestCase { name, passed, detail }
}

fn cortical_transcription(seed: u64) -> Result<SelfTestCase> {
    let mut rng = rng_for(seed, &[101]);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let f = rng.random_range(1..=6);
        let seg = rng.random_range(1..=n);
        let p = CorticalLayer::init(f, &mut rng).try_map("layer", &mut |_, m: &Matrix| {
            m.add(&normal(m.rows(), m.cols(), &mut rng).scale(0.5))
        })?;
        let (ha, hv) = (normal(n, f, &mut rng), normal(n, f, &mut rng));
        let mu0 = normal(1, f, &mut rng);
        let mut tape = Tape::new();
        let (a, v, m) = (
            tape.constant(ha.clone()),
            tape.constant(hv.clone()),
            tape.constant(mu0.clone()),
        );
        let pv = p.try_map("layer", &mut |_, m: &Matrix| {
            Ok::<_, crate::Error>(tape.constant(m.clone()))
        })?;
        let out = cortical_layer_forward(&mut tape, a, v, &pv, m, seg)?;
        let (ra, rv) = cortical_layer_reference(&ha, &hv, &p, mu0.row(0), seg);
        worst = worst
            .max(tape.value(out.h_a).sub(&ra)?.max_abs())
            .max(tape.value(out.h_v).sub(&rv)?.max_abs());
    }
    Ok(case(
        "cortical layer vs line-by-line",
        worst <= 1e-12,
        format!("max abs diff {worst:.2e} over 50 instances"),
    ))
}

fn graph_oracle() -> Result<SelfTestCase> {
    let mut mismatches = 0;
    for n in 1..=20 {
        for k in 1..=10 {
            let g = build_prior_frame_graph(n, k)?;
            let mut got: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.source, e.target, e.weight)).collect();
            got.sort_by_key(|x| (x.0, x.1));
            if got != prior_frame_edges_brute(n, k) {
                mismatches += 1;
            }
        }
    }
    Ok(case(
        "prior-frame graph vs enumeration",
        mismatches == 0,
        format!("{mismatches} of 200 (N, k) pairs differ"),
    ))
}

fn decorrelation_identity(seed: u64) -> Result<SelfTestCase> {
    let mut rng = rng_for(seed, &[102]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = normal(64, 8, &mut rng);
        let z = column_standardize(&m).value;
        worst = worst.max((decorrelation_term(&z) - pearson_offdiag_oracle(&m)?).abs());
    }
    Ok(case(
        "decorrelation vs Pearson off-diagonals",
        worst <= 1e-10,
        format!("max abs diff {worst:.2e}"),
    ))
}

fn scan_closed_forms() -> Result<SelfTestCase> {
    let scan = |omega: &[f64], gate: &[f64], init: f64| -> Result<Vec<f64>> {
        let mut t = Tape::new();
        let col = |v: &[f64]| Matrix::from_fn(v.len(), 1, |i, _| v[i]);
        let (o, g, i) = (
            t.constant(col(omega)),
            t.constant(col(gate)),
            t.constant(Matrix::filled(1, 1, init)),
        );
        let r = t.memory_scan(o, g, i, omega.len())?;
        Ok(t.value(r).as_slice().to_vec())
    };
    let ok = scan(&[1.0; 3], &[0.5; 3], 0.0)? == [1.0, 1.5, 1.75]
        && scan(&[0.0; 4], &[1.0; 4], 0.7)? == [0.7; 4]
        && scan(&[0.3, -0.2, 0.9], &[0.0; 3], 5.0)? == [0.3, -0.2, 0.9];
    Ok(case(
        "memory scan closed forms",
        ok,
        "[1, 1.5, 1.75], retention and reset limits".into(),
    ))
}

fn wilcoxon_oracle(seed: u64) -> Result<SelfTestCase> {
    let mut rng = rng_for(seed, &[103]);
    let mut worst = 0.0f64;
    let mut flag_mismatch = 0;
    for i in 0..50 {
        let n = 5 + i % 6;
        let a: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-3.0..3.0f64) * 4.0).round() / 4.0)
            .collect();
        let b: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(-2.0..2.5f64) * 4.0).round() / 4.0)
            .collect();
        let (Some(p), Ok(w)) = (wilcoxon_brute_force(&a, &b), wilcoxon_signed_rank(&a, &b)) else {
            continue;
        };
        worst = worst.max((p - w.p_two_sided).abs());
        flag_mismatch += usize::from((p < 0.05) != w.significant);
    }
    Ok(case(
        "Wilcoxon vs sign enumeration",
        worst <= 1e-12 && flag_mismatch == 0,
        format!("max p diff {worst:.2e}, {flag_mismatch} flag mismatches"),
    ))
}

fn auc_scale() -> Result<SelfTestCase> {
    let auc = activation_auc(&[0.5; 512])?;
    Ok(case(
        "activation AUC scale",
        auc == 255.5,
        format!("512 rates of 0.5 give {auc}"),
    ))
}

fn head_gradient(seed: u64) -> Result<SelfTestCase> {
    let mut rng = rng_for(seed, &[104]);
    let head = HeadParams::init(6, 3, &mut rng);
    let (za, zv) = (normal(5, 2, &mut rng), normal(5, 4, &mut rng));
    let target = normal(5, 3, &mut rng);
    let r = crate::diffmath::finite_difference_check(
        |t, p| {
            let hp = HeadParams {
                weight: p[0],
                bias: p[1],
            };
            let (a, v, y) = (
                t.constant(za.clone()),
                t.constant(zv.clone()),
                t.constant(target.clone()),
            );
            let pred = crate::objectives::reconstruct_on_tape(t, a, v, &hp)?;
            crate::objectives::mse_on_tape(t, pred, y)
        },
        &[head.weight, head.bias],
        1e-6,
    )?;
    Ok(case(
        "head MSE gradient",
        r.max_rel_error < GRADCHECK_TOLERANCE,
        format!("max rel error {:.2e}", r.max_rel_error),
    ))
}

fn model_gradients(seed: u64) -> Result<Vec<SelfTestCase>> {
    ModelKind::ALL
        .iter()
        .map(|&m| {
            let r = model_gradcheck(m, seed, &GradCheckSetup::default())?;
            Ok(case(
                match m {
                    ModelKind::Cortical => "cortical model gradient",
                    ModelKind::Ccagnn => "ccagnn model gradient",
                },
                r.max_rel_error < GRADCHECK_TOLERANCE,
                format!(
                    "max rel error {:.2e} over {} entries",
                    r.max_rel_error, r.entries_checked
                ),
            ))
        })
        .collect()
}

/// Runs every oracle comparison.
pub fn selftest(seed: u64) -> Result<Vec<SelfTestCase>> {
    let mut cases = vec![
        cortical_transcription(seed)?,
        graph_oracle()?,
        decorrelation_identity(seed)?,
        scan_closed_forms()?,
        wilcoxon_oracle(seed)?,
        auc_scale()?,
        head_gradient(seed)?,
    ];
    cases.extend(model_gradients(seed)?);
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_wilcoxon_by_hand() {
        let a: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(wilcoxon_brute_force(&a, &[0.0; 8]), Some(2.0 / 256.0));
        assert_eq!(wilcoxon_brute_force(&a, &a), None);
    }

    #[test]
    fn brute_force_graph_small() {
        assert_eq!(prior_frame_edges_brute(3, 1), vec![(1, 0, 1.0), (2, 1, 1.0)]);
        assert_eq!(
            prior_frame_edges_brute(3, 2),
            vec![(1, 0, 2.0), (2, 0, 1.0), (2, 1, 2.0)]
        );
    }

    #[test]
    fn reference_layer_single_node() {
        let p = CorticalLayer::zeros(1);
        let (a, v) = cortical_layer_reference(&Matrix::ones(1, 1), &Matrix::ones(1, 1), &p, &[0.0], 1);
        assert_eq!((a[(0, 0)], v[(0, 0)]), (0.0, 0.0));
    }
}
