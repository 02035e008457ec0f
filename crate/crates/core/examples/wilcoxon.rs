//! Paired Wilcoxon signed-rank test on per-fold errors of two models.

use ccgnn::trainer::wilcoxon_signed_rank;

fn main() -> ccgnn::Result<()> {
    let cortical = [0.019, 0.021, 0.017, 0.024, 0.018, 0.020, 0.016, 0.022, 0.019, 0.023];
    let baseline = [0.025, 0.024, 0.022, 0.027, 0.021, 0.026, 0.020, 0.023, 0.025, 0.024];
    let w = wilcoxon_signed_rank(&cortical, &baseline)?;
    println!("n = {}  W = {}  exact = {}", w.n, w.statistic, w.exact);
    println!(
        "p one-sided {:.5}  two-sided {:.5}  significant at 5%: {}",
        w.p_one_sided, w.p_two_sided, w.significant
    );

    let noisy: Vec<f64> = baseline
        .iter()
        .enumerate()
        .map(|(i, b)| b + if i % 2 == 0 { 0.003 } else { -0.003 })
        .collect();
    let w = wilcoxon_signed_rank(&noisy, &baseline)?;
    println!(
        "alternating differences: p two-sided {:.3}, significant: {}",
        w.p_two_sided, w.significant
    );
    Ok(())
}
