//! Prior-frame graph, its normalized propagation operator and one augmentation.

use ccgnn::diffmath::Matrix;
use ccgnn::seed::rng_for;
use ccgnn::tgraph::{augment_graph, build_prior_frame_graph, normalize_adjacency};

fn main() -> ccgnn::Result<()> {
    let (n, k) = (6, 3);
    let g = build_prior_frame_graph(n, k)?;
    println!("{} nodes, k = {k}, {} edges", g.num_nodes(), g.edges().len());
    for e in g.edges() {
        println!(
            "  {} -> {}  distance {}  weight {}",
            e.source, e.target, e.distance, e.weight
        );
    }

    let a = normalize_adjacency(&g).into_matrix();
    println!("normalized adjacency:");
    for r in 0..n {
        let row: Vec<String> = a.row(r).iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", row.join(" "));
    }

    let x = Matrix::from_fn(n, 4, |r, c| (r * 4 + c) as f64);
    let (ga, xa) = augment_graph(&g, &x, 0.3, 0.3, &mut rng_for(3, &[0]))?;
    let masked: Vec<usize> = (0..4).filter(|c| xa.column(*c).iter().all(|v| *v == 0.0)).collect();
    println!(
        "augmented: {} of {} edges kept, masked feature columns {masked:?}",
        ga.edges().len(),
        g.edges().len()
    );
    Ok(())
}
