//! Undirected graphs in CSR form and the spatial operators built on them.
//!
//! Two stochastic operators share the adjacency structure:
//!
//! * [`Graph::transition_apply`] applies `A D^-1` (column-stochastic):
//!   `out[j] = sum_{i in N(j)} f[i] / deg(i)`. It conserves total mass,
//!   `sum(out) == sum(f)`.
//! * [`Graph::walk_expectation_apply`] applies `D^-1 A` (row-stochastic):
//!   `out[j] = mean_{i in N(j)} f[i]`, the expected feature one uniform walk
//!   step away from `j`. It preserves constants and never expands the
//!   sup-norm. For an undirected graph this is exactly the transpose of
//!   `transition_apply`, which is why the pair serves as forward/adjoint in
//!   the deterministic path convolution.
//!
//! Both treat an isolated node as carrying an implicit self-loop (the walk
//! stays put), so neither ever divides by zero. The two matrices are
//! similar (`D^-1 A = D^-1 (A D^-1) D`), hence share their spectrum, which
//! lies in [-1, 1].

use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::FeatureMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge endpoint {node} out of range for {n} nodes")]
    NodeOutOfRange { node: u32, n: usize },
}

/// Compressed sparse row adjacency of an undirected graph. Every edge is
/// stored in both directions; a self-loop is stored once. Neighbor lists are
/// sorted ascending and deduplicated. `degrees[j]` is the length of row `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    row_offsets: Vec<usize>,
    neighbors: Vec<u32>,
    degrees: Vec<u32>,
}

impl Graph {
    /// Builds the CSR from an edge list. Edges are symmetrized and
    /// deduplicated; self-loops are kept as a single entry. Endpoints must
    /// be `< n`.
    pub fn from_edge_list(n: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node as usize >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            adj[u as usize].push(v);
            if u != v {
                adj[v as usize].push(u);
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut degrees = Vec::with_capacity(n);
        row_offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            degrees.push(list.len() as u32);
            row_offsets.push(neighbors.len());
        }
        Ok(Self { n, row_offsets, neighbors, degrees })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Undirected edge count: each {u,v} pair once, self-loops included.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|j| self.neighbors(j as u32).iter().filter(|&&i| i >= j as u32).count())
            .sum()
    }

    pub fn degree(&self, node: u32) -> usize {
        self.degrees[node as usize] as usize
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        let j = node as usize;
        &self.neighbors[self.row_offsets[j]..self.row_offsets[j + 1]]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    fn check_rows(&self, f: &FeatureMatrix) {
        assert_eq!(f.rows(), self.n, "feature rows must equal node count");
    }

    /// `A D^-1 f`: `out[j] = sum_{i in N(j)} f[i] / deg(i)`. Column sums of
    /// the operator are 1, so `sum(out) == sum(f)`. Isolated nodes copy
    /// their own row.
    pub fn transition_apply(&self, f: &FeatureMatrix) -> FeatureMatrix {
        self.check_rows(f);
        let c = f.cols();
        let mut out = FeatureMatrix::zeros(self.n, c);
        out.data_mut()
            .par_chunks_mut(c.max(1))
            .enumerate()
            .for_each(|(j, out_row)| {
                let nbrs = self.neighbors(j as u32);
                if nbrs.is_empty() {
                    out_row.copy_from_slice(f.row(j));
                    return;
                }
                for &i in nbrs {
                    let w = 1.0 / self.degrees[i as usize] as f64;
                    for (o, &v) in out_row.iter_mut().zip(f.row(i as usize)) {
                        *o += w * v;
                    }
                }
            });
        out
    }

    /// `D^-1 A f`: `out[j] = mean_{i in N(j)} f[i]`, the expectation of one
    /// uniform random-walk step from `j`. Transpose of
    /// [`Graph::transition_apply`]. Isolated nodes copy their own row.
    pub fn walk_expectation_apply(&self, f: &FeatureMatrix) -> FeatureMatrix {
        self.check_rows(f);
        let c = f.cols();
        let mut out = FeatureMatrix::zeros(self.n, c);
        out.data_mut()
            .par_chunks_mut(c.max(1))
            .enumerate()
            .for_each(|(j, out_row)| {
                let nbrs = self.neighbors(j as u32);
                if nbrs.is_empty() {
                    out_row.copy_from_slice(f.row(j));
                    return;
                }
                for &i in nbrs {
                    for (o, &v) in out_row.iter_mut().zip(f.row(i as usize)) {
                        *o += v;
                    }
                }
                let inv = 1.0 / nbrs.len() as f64;
                for o in out_row.iter_mut() {
                    *o *= inv;
                }
            });
        out
    }

    /// Symmetric-normalized propagator with self-loops,
    /// `D~^-1/2 (A + I) D~^-1/2 f` where `D~ = D + I`. Self-adjoint.
    pub fn gcn_propagator_apply(&self, f: &FeatureMatrix) -> FeatureMatrix {
        self.check_rows(f);
        let c = f.cols();
        let inv_sqrt: Vec<f64> =
            self.degrees.iter().map(|&d| 1.0 / ((d as f64 + 1.0).sqrt())).collect();
        let mut out = FeatureMatrix::zeros(self.n, c);
        out.data_mut()
            .par_chunks_mut(c.max(1))
            .enumerate()
            .for_each(|(j, out_row)| {
                for &i in self.neighbors(j as u32) {
                    let w = inv_sqrt[j] * inv_sqrt[i as usize];
                    for (o, &v) in out_row.iter_mut().zip(f.row(i as usize)) {
                        *o += w * v;
                    }
                }
                // The added self-loop; doubles an existing one as A+I requires.
                let w = inv_sqrt[j] * inv_sqrt[j];
                for (o, &v) in out_row.iter_mut().zip(f.row(j)) {
                    *o += w * v;
                }
            });
        out
    }

    /// `D^-1/2 A D^-1/2 f`, the symmetric matrix similar to `A D^-1`
    /// (conjugate by `D^1/2`); isolated nodes keep their row, matching the
    /// implicit self-loop of the stochastic operators.
    fn symmetric_normalized_apply(&self, f: &FeatureMatrix) -> FeatureMatrix {
        self.check_rows(f);
        let c = f.cols();
        let inv_sqrt: Vec<f64> = self
            .degrees
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        let mut out = FeatureMatrix::zeros(self.n, c);
        out.data_mut()
            .par_chunks_mut(c.max(1))
            .enumerate()
            .for_each(|(j, out_row)| {
                let nbrs = self.neighbors(j as u32);
                if nbrs.is_empty() {
                    out_row.copy_from_slice(f.row(j));
                    return;
                }
                for &i in nbrs {
                    let w = inv_sqrt[j] * inv_sqrt[i as usize];
                    for (o, &v) in out_row.iter_mut().zip(f.row(i as usize)) {
                        *o += w * v;
                    }
                }
            });
        out
    }

    /// Power-iteration estimate of the dominant |eigenvalue| of `A D^-1`.
    /// The iteration runs on the symmetric similar matrix
    /// `D^-1/2 A D^-1/2` (same spectrum): normality rules out the transient
    /// norm growth a non-normal operator can show, so the returned norm
    /// ratio approaches the spectral radius from below and never exceeds 1.
    /// Starts from a seeded positive vector, which cannot be orthogonal to
    /// the non-negative dominant eigenvector.
    pub fn spectral_radius_estimate(&self, iterations: usize, seed: u64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mut state = seed;
        let mut v = FeatureMatrix::from_vec(
            self.n,
            1,
            (0..self.n)
                .map(|_| {
                    state = crate::sampler::mix64(state.wrapping_add(0x9e3779b97f4a7c15));
                    0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect(),
        );
        let norm = |m: &FeatureMatrix| m.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let next = self.symmetric_normalized_apply(&v);
            estimate = norm(&next) / norm(&v);
            let inv = 1.0 / norm(&next);
            v = next;
            for x in v.data_mut() {
                *x *= inv;
            }
        }
        estimate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dense reference for A D^-1 with the same isolated-node convention.
    pub(crate) fn dense_transition(g: &Graph) -> Vec<Vec<f64>> {
        let n = g.node_count();
        let mut m = vec![vec![0.0; n]; n];
        for j in 0..n {
            let nbrs = g.neighbors(j as u32);
            if nbrs.is_empty() {
                m[j][j] = 1.0;
            } else {
                for &i in nbrs {
                    m[j][i as usize] = 1.0 / g.degree(i) as f64;
                }
            }
        }
        m
    }

    fn dense_apply(m: &[Vec<f64>], f: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::zeros(f.rows(), f.cols());
        for j in 0..f.rows() {
            for i in 0..f.rows() {
                if m[j][i] != 0.0 {
                    for ch in 0..f.cols() {
                        let v = out.get(j, ch) + m[j][i] * f.get(i, ch);
                        out.set(j, ch, v);
                    }
                }
            }
        }
        out
    }

    fn rand_features(n: usize, c: usize, seed: u64) -> FeatureMatrix {
        let mut state = seed;
        FeatureMatrix::from_vec(
            n,
            c,
            (0..n * c)
                .map(|_| {
                    state = crate::sampler::mix64(state.wrapping_add(1));
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect(),
        )
    }

    fn graph_strategy() -> impl Strategy<Value = Graph> {
        (1usize..24).prop_flat_map(|n| {
            prop::collection::vec((0..n as u32, 0..n as u32), 0..60)
                .prop_map(move |edges| Graph::from_edge_list(n, &edges).unwrap())
        })
    }

    #[test]
    fn builds_path_graph_csr() {
        let g = Graph::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(2), &[1]);
        assert_eq!(g.degrees(), &[1, 2, 1]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn deduplicates_and_keeps_single_self_loop() {
        let g = Graph::from_edge_list(3, &[(0, 1), (1, 0), (0, 1), (2, 2)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[2]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn rejects_out_of_range_endpoint() {
        let err = Graph::from_edge_list(2, &[(0, 5)]).unwrap_err();
        assert_eq!(err, GraphError::NodeOutOfRange { node: 5, n: 2 });
    }

    #[test]
    fn transition_swaps_rows_on_two_path() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![0.0]]);
        let out = g.transition_apply(&f);
        assert_eq!(out, FeatureMatrix::from_rows(&[vec![0.0], vec![1.0]]));
    }

    #[test]
    fn transition_matches_dense_oracle_on_triangle_with_pendant() {
        let g = Graph::from_edge_list(4, &[(0, 1), (1, 2), (2, 0), (0, 3)]).unwrap();
        let f = rand_features(4, 3, 7);
        let dense = dense_apply(&dense_transition(&g), &f);
        assert!(g.transition_apply(&f).max_abs_diff(&dense) < 1e-14);
    }

    #[test]
    fn isolated_node_keeps_its_row() {
        let g = Graph::from_edge_list(3, &[(0, 1)]).unwrap();
        let f = rand_features(3, 2, 11);
        let out = g.transition_apply(&f);
        assert_eq!(out.row(2), f.row(2));
        let out = g.walk_expectation_apply(&f);
        assert_eq!(out.row(2), f.row(2));
    }

    #[test]
    fn walk_expectation_averages_neighbors() {
        // Star: center 0 with leaves 1..=3.
        let g = Graph::from_edge_list(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![10.0], vec![1.0], vec![2.0], vec![3.0]]);
        let out = g.walk_expectation_apply(&f);
        assert!((out.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((out.get(1, 0) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn gcn_propagator_is_identity_on_self_loop_singleton() {
        let g = Graph::from_edge_list(1, &[(0, 0)]).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![3.5, -1.0]]);
        // deg=1 from the loop, D~=2, A~ entry 2: out = 2*f/2 = f.
        assert!(g.gcn_propagator_apply(&f).max_abs_diff(&f) < 1e-15);
    }

    #[test]
    fn gcn_propagator_halves_two_path() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![1.0], vec![0.0]]);
        let out = g.gcn_propagator_apply(&f);
        assert!((out.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((out.get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spectral_radius_is_one_on_two_path() {
        let g = Graph::from_edge_list(2, &[(0, 1)]).unwrap();
        assert!((g.spectral_radius_estimate(100, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_radius_matches_dense_eigensolver() {
        // Connected, non-bipartite: ring plus chords and a triangle.
        let mut edges: Vec<(u32, u32)> = (0..50).map(|i| (i, (i + 1) % 50)).collect();
        edges.extend((0..50).step_by(3).map(|i| (i, (i + 7) % 50)));
        edges.push((0, 2));
        let g = Graph::from_edge_list(50, &edges).unwrap();

        // A D^-1 is similar to the symmetric D^-1/2 A D^-1/2, so its
        // spectrum comes from a symmetric eigensolver.
        let n = g.node_count();
        let mut s = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for &i in g.neighbors(j as u32) {
                s[(j, i as usize)] =
                    1.0 / ((g.degree(j as u32) as f64).sqrt() * (g.degree(i) as f64).sqrt());
            }
        }
        let eig = nalgebra::SymmetricEigen::new(s);
        let dominant = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));

        let est = g.spectral_radius_estimate(2000, 42);
        assert!((est - dominant).abs() < 1e-6, "est {est} vs dense {dominant}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn transition_conserves_mass(g in graph_strategy(), seed in 0u64..1000) {
            let f = rand_features(g.node_count(), 2, seed);
            let out = g.transition_apply(&f);
            for ch in 0..2 {
                let before: f64 = (0..g.node_count()).map(|j| f.get(j, ch)).sum();
                let after: f64 = (0..g.node_count()).map(|j| out.get(j, ch)).sum();
                prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before.abs()));
            }
        }

        #[test]
        fn transition_is_linear(g in graph_strategy(), seed in 0u64..1000) {
            let n = g.node_count();
            let f1 = rand_features(n, 2, seed);
            let f2 = rand_features(n, 2, seed ^ 0xabcd);
            let mut combo = FeatureMatrix::zeros(n, 2);
            for i in 0..n {
                for ch in 0..2 {
                    combo.set(i, ch, 2.0 * f1.get(i, ch) - 3.0 * f2.get(i, ch));
                }
            }
            let lhs = g.transition_apply(&combo);
            let (o1, o2) = (g.transition_apply(&f1), g.transition_apply(&f2));
            for i in 0..n {
                for ch in 0..2 {
                    let rhs = 2.0 * o1.get(i, ch) - 3.0 * o2.get(i, ch);
                    prop_assert!((lhs.get(i, ch) - rhs).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn walk_expectation_is_transpose_of_transition(g in graph_strategy(), seed in 0u64..1000) {
            // <D^-1 A f, h> == <f, A D^-1 h> for undirected graphs.
            let n = g.node_count();
            let f = rand_features(n, 1, seed);
            let h = rand_features(n, 1, seed ^ 0x5555);
            let lhs: f64 = (0..n).map(|j| g.walk_expectation_apply(&f).get(j, 0) * h.get(j, 0)).sum();
            let rhs: f64 = (0..n).map(|j| f.get(j, 0) * g.transition_apply(&h).get(j, 0)).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn walk_expectation_never_expands_sup_norm(g in graph_strategy(), seed in 0u64..1000) {
            let f = rand_features(g.node_count(), 3, seed);
            let out = g.walk_expectation_apply(&f);
            prop_assert!(out.sup_norm() <= f.sup_norm() + 1e-12);
        }

        #[test]
        fn gcn_propagator_is_self_adjoint(g in graph_strategy(), seed in 0u64..1000) {
            let n = g.node_count();
            let f = rand_features(n, 1, seed);
            let h = rand_features(n, 1, seed ^ 0x1234);
            let lhs: f64 = (0..n).map(|j| g.gcn_propagator_apply(&f).get(j, 0) * h.get(j, 0)).sum();
            let rhs: f64 = (0..n).map(|j| f.get(j, 0) * g.gcn_propagator_apply(&h).get(j, 0)).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn spectral_radius_stays_in_unit_interval(g in graph_strategy(), seed in 0u64..100) {
            let est = g.spectral_radius_estimate(60, seed);
            prop_assert!(est <= 1.0 + 1e-9, "estimate {est} above 1");
            prop_assert!(est >= 0.0);
        }
    }
}
