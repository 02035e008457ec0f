//! Firing rates, activation AUC and the Wilcoxon signed-rank test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diffmath::Matrix;
use crate::error::{invalid, Error, Result};

/// Threshold for sigmoid gates, whose range is (0, 1).
pub const GATE_THRESHOLD: f64 = 0.5;
/// Threshold for signed outputs in (−1, 1).
pub const SIGNED_THRESHOLD: f64 = 0.0;

/// Fraction of rows (samples) on which each column (neuron) exceeds `threshold`.
pub fn firing_rates(activations: &Matrix, threshold: f64) -> Result<Vec<f64>> {
    if activations.is_empty() {
        return Err(invalid("empty activation trace"));
    }
    let n = activations.rows() as f64;
    let mut counts = vec![0usize; activations.cols()];
    for r in 0..activations.rows() {
        for (c, &v) in counts.iter_mut().zip(activations.row(r)) {
            if v > threshold {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Trapezoidal area under the rate curve over neuron index with unit spacing.
pub fn activation_auc(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(invalid("no firing rates"));
    }
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(invalid(format!("firing rate {r} outside [0, 1]")));
    }
    Ok(rates.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    /// `P(T ≤ W)` under the null.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    pub exact: bool,
    pub significant: bool,
}

/// Largest sample size for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 12;
pub const ALPHA: f64 = 0.05;

/// Average ranks of `values` (ascending), ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Counts sign assignments by subset sums over doubled (hence integral) ranks.
fn exact_lower_tail(doubled: &[usize], w_doubled: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0f64; total + 1];
    ways[0] = 1.0;
    for &r in doubled {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let hits: f64 = ways[..=w_doubled.min(total)].iter().sum();
    hits / 2f64.powi(doubled.len() as i32)
}

/// Paired two-sided Wilcoxon signed-rank test; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(Error::NoInformation);
    }
    let n = diffs.len();
    if n < 5 {
        return Err(invalid(format!("{n} non-zero differences; at least 5 are needed")));
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);
    let w_minus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d < 0.0)
        .fold(0.0, |acc, (_, r)| acc + r);
    let statistic = w_plus.min(w_minus);

    let (p_one_sided, exact) = if n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        (exact_lower_tail(&doubled, (2.0 * statistic).round() as usize), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let tie_term: f64 = sorted
            .chunk_by(|x, y| x == y)
            .map(|g| {
                let t = g.len() as f64;
                t * t * t - t
            })
            .sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (statistic - mean + 0.5).min(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (normal.cdf(z), false)
    };
    let p_two_sided = (2.0 * p_one_sided).min(1.0);
    Ok(WilcoxonResult {
        statistic,
        n,
        p_one_sided,
        p_two_sided,
        exact,
        significant: p_two_sided < ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sided_statistic_is_positive_zero() {
        let w = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!(w.statistic == 0.0 && w.statistic.is_sign_positive());
        assert_eq!(w.p_two_sided, 2.0 / 32.0);
    }

    #[test]
    fn rates_by_hand() {
        assert_eq!(firing_rates(&Matrix::ones(3, 4), 0.5).unwrap(), vec![1.0; 4]);
        let alt = Matrix::from_rows(&[[0.0], [1.0], [0.0], [1.0]]);
        assert_eq!(firing_rates(&alt, 0.5).unwrap(), vec![0.5]);
        let t = Matrix::from_rows(&[[0.9, -0.2, 0.0], [0.1, 0.3, 0.0], [0.7, 0.4, 0.0], [0.6, -0.9, 1e-9]]);
        assert_eq!(firing_rates(&t, 0.0).unwrap(), vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn auc_by_hand() {
        assert_eq!(activation_auc(&[0.0; 7]).unwrap(), 0.0);
        assert_eq!(activation_auc(&[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(activation_auc(&vec![0.5; 512]).unwrap(), 255.5);
        assert_eq!(activation_auc(&[1.0; 10]).unwrap(), 9.0);
        assert!(activation_auc(&[]).is_err());
        assert!(activation_auc(&[1.5]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn all_positive_eight() {
        let a: Vec<f64> = (1..=8).map(f64::from).collect();
        let b = vec![0.0; 8];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_one_sided, 1.0 / 256.0);
        assert!(r.significant);
    }

    #[test]
    fn identical_samples_carry_no_information() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(wilcoxon_signed_rank(&a, &a), Err(Error::NoInformation)));
        assert!(wilcoxon_signed_rank(&a, &a[..4]).is_err());
        assert!(wilcoxon_signed_rank(&[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn large_sample_normal_approximation() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..30)
            .map(|i| (i as f64 * 0.37).sin() - 0.1 + 0.01 * (i % 7) as f64)
            .collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!(!r.exact);
        assert!(r.p_two_sided < 1e-4);
        let c: Vec<f64> = (0..30)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * (i + 1) as f64)
            .collect();
        let r = wilcoxon_signed_rank(&c, &vec![0.0; 30]).unwrap();
        assert!(r.p_two_sided > 0.5);
    }
}
