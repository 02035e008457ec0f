//! Prior-frame temporal graphs, their propagation operator, and random
//! edge-dropping / feature-masking augmentation.

use rand::Rng;

use crate::diffmath::Matrix;
use crate::error::{invalid, Result};

/// Directed edge from a later frame `source` to an earlier frame `target`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    /// Frame-step distance `source - target`.
    pub distance: usize,
}

/// Frame-ordered nodes with weighted edges to their `k` predecessors.
///
/// A graph may hold several independent sequences back to back; edges never
/// cross a boundary between consecutive blocks of `segment_len` nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGraph {
    num_nodes: usize,
    k: usize,
    segment_len: usize,
    edges: Vec<Edge>,
}

/// Weight of an edge spanning `d` frames in a `k`-prior-frame neighbourhood.
pub fn edge_weight(d: usize, k: usize) -> Result<f64> {
    if d < 1 || d > k {
        return Err(invalid(format!("frame distance {d} outside [1, {k}]")));
    }
    Ok((k + 1 - d) as f64)
}

/// Single-sequence graph: node `i` links to `i-1 ..= i-min(i,k)`.
pub fn build_prior_frame_graph(num_nodes: usize, k: usize) -> Result<TemporalGraph> {
    build_sequence_graph(1, num_nodes, k)
}

/// Disjoint union of `sequences` prior-frame graphs of `frames` nodes each.
pub fn build_sequence_graph(sequences: usize, frames: usize, k: usize) -> Result<TemporalGraph> {
    if sequences == 0 || frames == 0 {
        return Err(invalid("temporal graph needs at least one node"));
    }
    if k == 0 {
        return Err(invalid("prior-frame count k must be positive"));
    }
    let mut edges = Vec::new();
    for s in 0..sequences {
        let base = s * frames;
        for i in 0..frames {
            for d in 1..=i.min(k) {
                edges.push(Edge {
                    source: base + i,
                    target: base + i - d,
                    weight: edge_weight(d, k)?,
                    distance: d,
                });
            }
        }
    }
    Ok(TemporalGraph {
        num_nodes: sequences * frames,
        k,
        segment_len: frames,
        edges,
    })
}

impl TemporalGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of each independent sequence block.
    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.source == node).count()
    }

    /// Frame-step distance of the edge `source -> target`, if present.
    pub fn distance(&self, source: usize, target: usize) -> Option<usize> {
        self.edges
            .iter()
            .find(|e| e.source == source && e.target == target)
            .map(|e| e.distance)
    }

    /// Dense weighted adjacency with `A[source][target] = w`.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for e in &self.edges {
            a[(e.source, e.target)] = e.weight;
        }
        a
    }
}

/// Symmetric propagation operator `D^{-1/2} Â D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency(Matrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }
}

/// Symmetrised weighted adjacency `max(A, Aᵀ)` plus self-loops of weight `k`.
pub fn symmetric_adjacency(g: &TemporalGraph) -> Matrix {
    let n = g.num_nodes();
    let mut a = Matrix::zeros(n, n);
    for e in g.edges() {
        let w = a[(e.source, e.target)].max(e.weight);
        a[(e.source, e.target)] = w;
        a[(e.target, e.source)] = w;
    }
    for i in 0..n {
        a[(i, i)] = g.k() as f64;
    }
    a
}

pub fn normalize_adjacency(g: &TemporalGraph) -> NormalizedAdjacency {
    let mut a = symmetric_adjacency(g);
    let n = g.num_nodes();
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum::<f64>()).collect();
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] != 0.0 {
                a[(i, j)] /= (degree[i] * degree[j]).sqrt();
            }
        }
    }
    NormalizedAdjacency(a)
}

/// Drops each edge with probability `p_edge` and zeroes each feature column
/// with probability `p_feat`. Inputs are left untouched.
pub fn augment_graph<R: Rng + ?Sized>(
    g: &TemporalGraph,
    x: &Matrix,
    p_edge: f64,
    p_feat: f64,
    rng: &mut R,
) -> Result<(TemporalGraph, Matrix)> {
    for (name, p) in [("p_edge", p_edge), ("p_feat", p_feat)] {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("{name} = {p} outside [0, 1)")));
        }
    }
    if x.rows() != g.num_nodes() {
        return Err(invalid(format!(
            "feature matrix has {} rows for {} nodes",
            x.rows(),
            g.num_nodes()
        )));
    }
    // Draws happen even for p = 0 so the stream position only depends on shapes.
    let edges: Vec<Edge> = g
        .edges
        .iter()
        .filter(|_| rng.random::<f64>() >= p_edge)
        .copied()
        .collect();
    let mut masked = x.clone();
    for c in 0..x.cols() {
        if rng.random::<f64>() < p_feat {
            masked.set_column(c, &vec![0.0; x.rows()]);
        }
    }
    Ok((TemporalGraph { edges, ..g.clone() }, masked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights() {
        assert_eq!(edge_weight(1, 2).unwrap(), 2.0);
        assert_eq!(edge_weight(7, 7).unwrap(), 1.0);
        assert_eq!(edge_weight(3, 10).unwrap(), 8.0);
        assert!(edge_weight(0, 3).is_err());
        assert!(edge_weight(4, 3).is_err());
    }

    #[test]
    fn small_graphs() {
        assert!(build_prior_frame_graph(1, 3).unwrap().edges().is_empty());
        assert!(build_prior_frame_graph(0, 3).is_err());
        let g = build_prior_frame_graph(4, 2).unwrap();
        let got: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.source, e.target, e.weight)).collect();
        assert_eq!(
            got,
            vec![(1, 0, 2.0), (2, 1, 2.0), (2, 0, 1.0), (3, 2, 2.0), (3, 1, 1.0)]
        );
        assert_eq!(g.distance(3, 1), Some(2));
        assert_eq!(g.distance(1, 3), None);
    }

    #[test]
    fn full_length_sequence() {
        let g = build_prior_frame_graph(48, 30).unwrap();
        assert_eq!(g.in_degree(47), 30);
        assert_eq!(g.in_degree(10), 10);
    }

    #[test]
    fn sequences_do_not_link() {
        let g = build_sequence_graph(3, 5, 4).unwrap();
        assert!(g.edges().iter().all(|e| e.source / 5 == e.target / 5));
        assert_eq!(g.in_degree(5), 0);
    }

    #[test]
    fn single_node_operator_is_one() {
        let a = normalize_adjacency(&build_prior_frame_graph(1, 3).unwrap());
        assert_eq!(a.matrix().as_slice(), &[1.0]);
    }

    #[test]
    fn two_nodes_all_half() {
        let a = normalize_adjacency(&build_prior_frame_graph(2, 1).unwrap());
        assert!(a.matrix().as_slice().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn row_sums_are_weighted_degree() {
        let g = build_prior_frame_graph(6, 3).unwrap();
        let a = symmetric_adjacency(&g);
        for i in 0..6 {
            let deg: f64 = g
                .edges()
                .iter()
                .filter(|e| e.source == i || e.target == i)
                .map(|e| e.weight)
                .sum::<f64>()
                + 3.0;
            assert_eq!(a.row(i).iter().sum::<f64>(), deg);
        }
    }

    #[test]
    fn no_op_augmentation() {
        let g = build_prior_frame_graph(6, 2).unwrap();
        let x = Matrix::from_fn(6, 3, |r, c| (r * 3 + c) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g2, x2) = augment_graph(&g, &x, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(g2, g);
        assert_eq!(x2, x);
    }

    #[test]
    fn aggressive_masking_keeps_survivors_exact() {
        let g = build_prior_frame_graph(5, 2).unwrap();
        let x = Matrix::from_fn(5, 200, |r, c| 1.0 + (r + c) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, xm) = augment_graph(&g, &x, 0.0, 0.999_999, &mut rng).unwrap();
        let mut zeroed = 0;
        for c in 0..200 {
            let col = xm.column(c);
            if col.iter().all(|v| *v == 0.0) {
                zeroed += 1;
            } else {
                assert_eq!(col, x.column(c));
            }
        }
        assert!(zeroed >= 199);
    }

    #[test]
    fn bad_probabilities() {
        let g = build_prior_frame_graph(3, 1).unwrap();
        let x = Matrix::zeros(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(augment_graph(&g, &x, 1.0, 0.0, &mut rng).is_err());
        assert!(augment_graph(&g, &x, 0.0, -0.1, &mut rng).is_err());
    }
}
