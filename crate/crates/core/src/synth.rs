//! Deterministic synthetic graphs and datasets for tests, verification
//! runs, and the `synth` CLI command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;
use crate::matrix::FeatureMatrix;

/// A self-contained labeled dataset: graph, node features, labels, and
/// train/val/test node splits.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl SynthDataset {
    /// The three node sets as one trainable split.
    pub fn split(&self) -> crate::bundle::Split {
        crate::bundle::Split {
            train: self.train.clone(),
            val: self.val.clone(),
            test: self.test.clone(),
        }
    }
}

/// Path graph `0 - 1 - ... - n-1`.
pub fn path(n: usize) -> Graph {
    let edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (v - 1, v)).collect();
    Graph::from_edge_list(n, &edges).expect("path edges in range")
}

/// Star with center 0 and `n - 1` leaves.
pub fn star(n: usize) -> Graph {
    let edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (0, v)).collect();
    Graph::from_edge_list(n, &edges).expect("star edges in range")
}

/// Cycle on `n` nodes (`n >= 3`).
pub fn cycle(n: usize) -> Graph {
    assert!(n >= 3, "cycle needs at least 3 nodes");
    let mut edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (v - 1, v)).collect();
    edges.push((n as u32 - 1, 0));
    Graph::from_edge_list(n, &edges).expect("cycle edges in range")
}

/// Erdos-Renyi G(n, prob), seeded. Each unordered pair is included
/// independently; isolated nodes are possible and legal.
pub fn erdos_renyi(n: usize, prob: f64, seed: u64) -> Graph {
    assert!((0.0..=1.0).contains(&prob));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edge_list(n, &edges).expect("er edges in range")
}

/// Fixed 34-node two-community club graph (78 edges). Deterministic by
/// construction; handy for kernel visualizations on a familiar shape.
pub fn karate_like() -> Graph {
    const EDGES_1BASED: [(u32, u32); 78] = [
        (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9), (1, 11), (1, 12),
        (1, 13), (1, 14), (1, 18), (1, 20), (1, 22), (1, 32), (2, 3), (2, 4), (2, 8), (2, 14),
        (2, 18), (2, 20), (2, 22), (2, 31), (3, 4), (3, 8), (3, 9), (3, 10), (3, 14), (3, 28),
        (3, 29), (3, 33), (4, 8), (4, 13), (4, 14), (5, 7), (5, 11), (6, 7), (6, 11), (6, 17),
        (7, 17), (9, 31), (9, 33), (9, 34), (10, 34), (14, 34), (15, 33), (15, 34), (16, 33),
        (16, 34), (19, 33), (19, 34), (20, 34), (21, 33), (21, 34), (23, 33), (23, 34),
        (24, 26), (24, 28), (24, 30), (24, 33), (24, 34), (25, 26), (25, 28), (25, 32),
        (26, 32), (27, 30), (27, 34), (28, 34), (29, 32), (29, 34), (30, 33), (30, 34),
        (31, 33), (31, 34), (32, 33), (32, 34), (33, 34),
    ];
    let edges: Vec<(u32, u32)> = EDGES_1BASED.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
    Graph::from_edge_list(34, &edges).expect("fixed edges in range")
}

/// The standard two-faction membership of [`karate_like`], as 0/1 labels.
pub fn karate_factions() -> Vec<usize> {
    let side_zero = [0usize, 1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 16, 17, 19, 21];
    (0..34).map(|j| usize::from(!side_zero.contains(&j))).collect()
}

/// Wraps a bare graph as a dataset: features `[1, degree]`, labels =
/// degree parity (or the given labels), round-robin splits. Good enough
/// for demos and interface tests; not a learning benchmark.
pub fn structural_dataset(graph: Graph, labels: Option<Vec<usize>>) -> SynthDataset {
    let n = graph.node_count();
    let mut features = FeatureMatrix::zeros(n, 2);
    for j in 0..n {
        features.set(j, 0, 1.0);
        features.set(j, 1, graph.degree(j as u32) as f64);
    }
    let labels =
        labels.unwrap_or_else(|| (0..n).map(|j| (graph.degree(j as u32) % 2) as usize).collect());
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1).max(2);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for j in 0..n as u32 {
        match j % 4 {
            0 => train.push(j),
            1 => val.push(j),
            _ => test.push(j),
        }
    }
    SynthDataset { graph, features, labels, num_classes, train, val, test }
}

/// Two dense cliques of `half` nodes each, joined by a single cross edge
/// (node 0 to node `half`). Features are a one-hot cluster indicator plus
/// seeded uniform noise in [-noise, noise]; labels are the cluster ids.
/// Splits take every 4th node for train, every 4th+1 for val, rest test.
pub fn two_cliques(half: usize, noise: f64, seed: u64) -> SynthDataset {
    assert!(half >= 2);
    let n = 2 * half;
    let mut edges = Vec::new();
    for block in 0..2u32 {
        let base = block * half as u32;
        for u in 0..half as u32 {
            for v in (u + 1)..half as u32 {
                edges.push((base + u, base + v));
            }
        }
    }
    edges.push((0, half as u32));
    let graph = Graph::from_edge_list(n, &edges).expect("clique edges in range");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = FeatureMatrix::zeros(n, 2);
    let mut labels = vec![0usize; n];
    for j in 0..n {
        let cluster = j / half;
        labels[j] = cluster;
        let row = features.row_mut(j);
        row[cluster] = 1.0;
        for v in row.iter_mut() {
            *v += noise * (2.0 * rng.random::<f64>() - 1.0);
        }
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for j in 0..n as u32 {
        match j % 4 {
            0 => train.push(j),
            1 => val.push(j),
            _ => test.push(j),
        }
    }
    SynthDataset { graph, features, labels, num_classes: 2, train, val, test }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_and_star_and_cycle_shapes() {
        let p = path(5);
        assert_eq!(p.edge_count(), 4);
        assert_eq!(p.degree(0), 1);
        assert_eq!(p.degree(2), 2);
        let s = star(6);
        assert_eq!(s.edge_count(), 5);
        assert_eq!(s.degree(0), 5);
        assert_eq!(s.degree(3), 1);
        let c = cycle(4);
        assert_eq!(c.edge_count(), 4);
        assert!((0..4).all(|j| c.degree(j) == 2));
    }

    #[test]
    fn erdos_renyi_is_seeded_and_density_tracks_prob() {
        let a = erdos_renyi(100, 0.05, 7);
        let b = erdos_renyi(100, 0.05, 7);
        assert_eq!(a.edge_count(), b.edge_count());
        assert_ne!(a.edge_count(), erdos_renyi(100, 0.05, 8).edge_count());
        // 4950 pairs at p=0.05: expect ~247, allow a wide band.
        let m = a.edge_count();
        assert!((150..350).contains(&m), "edge count {m}");
    }

    #[test]
    fn karate_like_shape() {
        let g = karate_like();
        assert_eq!(g.node_count(), 34);
        assert_eq!(g.edge_count(), 78);
        assert_eq!(g.degree(33), 17);
        assert_eq!(g.degree(0), 16);
        let factions = karate_factions();
        assert_eq!(factions.len(), 34);
        assert_eq!(factions[0], 0);
        assert_eq!(factions[33], 1);
        assert_eq!(factions.iter().filter(|&&f| f == 0).count(), 16);
    }

    #[test]
    fn structural_dataset_wraps_any_graph() {
        let d = structural_dataset(star(5), None);
        assert_eq!(d.features.get(0, 1), 4.0);
        assert_eq!(d.labels, vec![0, 1, 1, 1, 1]);
        assert_eq!(d.num_classes, 2);
        assert!(!d.train.is_empty() && !d.val.is_empty() && !d.test.is_empty());
    }

    #[test]
    fn two_cliques_structure() {
        let d = two_cliques(8, 0.1, 3);
        assert_eq!(d.graph.node_count(), 16);
        // Two K8 cliques (28 edges each) plus one bridge.
        assert_eq!(d.graph.edge_count(), 57);
        assert!(d.graph.has_edge(0, 8));
        assert!(!d.graph.has_edge(1, 9));
        assert_eq!(d.labels[..8], [0; 8]);
        assert_eq!(d.labels[8..], [1; 8]);
        assert_eq!(d.train.len() + d.val.len() + d.test.len(), 16);
        // Cluster indicator dominates noise.
        assert!(d.features.get(2, 0) > 0.5 && d.features.get(2, 1).abs() < 0.5);
        assert!(d.features.get(12, 1) > 0.5 && d.features.get(12, 0).abs() < 0.5);
    }
}
