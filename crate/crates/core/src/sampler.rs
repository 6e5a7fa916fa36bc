//! Random-walk path sampling.
//!
//! Every node of a graph originates `p` uniform random walks of `k` visited
//! nodes (the origin plus `k-1` steps; each step moves to a uniformly chosen
//! neighbor of the current node). Isolated nodes carry an implicit
//! self-loop, so their walks stay put.
//!
//! Determinism contract: walks for origin `j` come from a `ChaCha8Rng`
//! seeded with `mix64(seed ^ mix64(j + 1))`, so the path set is a pure
//! function of `(graph, config)` and identical at any thread count.
//! [`PathSet::resample`] derives a fresh effective seed per iteration the
//! same way, letting a training loop draw independent path sets per step
//! without coordination.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::Graph;

/// SplitMix64 finalizer: a bijective avalanche mix used to derive
/// independent seed streams from (seed, index) pairs.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

/// Derives the stream seed for one (base seed, index) pair. Distinct
/// indices give distinct seeds: the inner mix is a bijection, xor with a
/// constant is a bijection, and the outer mix is a bijection.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(1)))
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("path set io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed path set: {0}")]
    Malformed(String),
}

/// Walk sampling parameters: path length `k` (visited nodes, so `k-1`
/// steps), `walks_per_node` sampled paths per origin, and the base seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WalkConfig {
    pub length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
}

/// `n x p x k` node indices, row-major: walk `w` from origin `j` occupies
/// `indices[(j*p + w)*k .. +k]` and always starts with `j` itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathSet {
    n: usize,
    walks_per_node: usize,
    length: usize,
    seed: u64,
    indices: Vec<u32>,
}

impl PathSet {
    /// Samples all walks for `graph` under `cfg`.
    pub fn sample(graph: &Graph, cfg: &WalkConfig) -> Self {
        assert!(cfg.length >= 1, "walk length must be at least 1");
        assert!(cfg.walks_per_node >= 1, "walks_per_node must be at least 1");
        let n = graph.node_count();
        let (p, k) = (cfg.walks_per_node, cfg.length);
        let mut indices = vec![0u32; n * p * k];
        indices
            .par_chunks_mut(p * k)
            .enumerate()
            .for_each(|(j, block)| {
                let origin = j as u32;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, j as u64));
                for w in 0..p {
                    let walk = &mut block[w * k..(w + 1) * k];
                    walk[0] = origin;
                    let mut current = origin;
                    for slot in walk.iter_mut().skip(1) {
                        let nbrs = graph.neighbors(current);
                        if !nbrs.is_empty() {
                            current = nbrs[rng.random_range(0..nbrs.len())];
                        }
                        *slot = current;
                    }
                }
            });
        Self { n, walks_per_node: p, length: k, seed: cfg.seed, indices }
    }

    /// Samples with an effective seed derived from `(cfg.seed, iteration)`,
    /// so each training step sees an independent, reproducible path set.
    pub fn resample(graph: &Graph, cfg: &WalkConfig, iteration: u64) -> Self {
        let derived = WalkConfig { seed: derive_seed(cfg.seed, iteration), ..*cfg };
        Self::sample(graph, &derived)
    }

    /// Wraps raw indices. Validates shape, the origin-first invariant, and
    /// the node range; used by tests and by [`PathSet::load`].
    pub fn from_indices(
        n: usize,
        walks_per_node: usize,
        length: usize,
        seed: u64,
        indices: Vec<u32>,
    ) -> Result<Self, SamplerError> {
        if indices.len() != n * walks_per_node * length {
            return Err(SamplerError::Malformed(format!(
                "expected {} indices, got {}",
                n * walks_per_node * length,
                indices.len()
            )));
        }
        for j in 0..n {
            for w in 0..walks_per_node {
                let walk = &indices[(j * walks_per_node + w) * length..][..length];
                if walk[0] as usize != j {
                    return Err(SamplerError::Malformed(format!(
                        "walk {w} of origin {j} starts at {}",
                        walk[0]
                    )));
                }
                if let Some(&bad) = walk.iter().find(|&&v| v as usize >= n) {
                    return Err(SamplerError::Malformed(format!(
                        "node index {bad} out of range for {n} nodes"
                    )));
                }
            }
        }
        Ok(Self { n, walks_per_node, length, seed, indices })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn walks_per_node(&self) -> usize {
        self.walks_per_node
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Walk `w` originating at `origin`: exactly `length` node indices.
    pub fn walk(&self, origin: u32, w: usize) -> &[u32] {
        let base = (origin as usize * self.walks_per_node + w) * self.length;
        &self.indices[base..base + self.length]
    }

    /// Binary dump: header `n, p, k` as little-endian u32, `seed` as
    /// little-endian u64, then the row-major index payload as little-endian
    /// u32. The layout is frozen; see the golden-bytes test.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<(), SamplerError> {
        out.write_all(&(self.n as u32).to_le_bytes())?;
        out.write_all(&(self.walks_per_node as u32).to_le_bytes())?;
        out.write_all(&(self.length as u32).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.indices.len() * 4);
        for &v in &self.indices {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self, SamplerError> {
        let mut head = [0u8; 20];
        input.read_exact(&mut head).map_err(|e| {
            SamplerError::Malformed(format!("short header: {e}"))
        })?;
        let n = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
        let p = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let k = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let seed = u64::from_le_bytes(head[12..20].try_into().unwrap());
        let total = n
            .checked_mul(p)
            .and_then(|x| x.checked_mul(k))
            .ok_or_else(|| SamplerError::Malformed("header size overflow".into()))?;
        let mut payload = vec![0u8; total * 4];
        input.read_exact(&mut payload).map_err(|e| {
            SamplerError::Malformed(format!("truncated payload: {e}"))
        })?;
        let indices = payload
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_indices(n, p, k, seed, indices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_path() -> Graph {
        Graph::from_edge_list(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn two_path_walks_alternate_endpoints() {
        let g = two_path();
        let ps = PathSet::sample(&g, &WalkConfig { length: 3, walks_per_node: 4, seed: 9 });
        for w in 0..4 {
            assert_eq!(ps.walk(0, w), &[0, 1, 0]);
            assert_eq!(ps.walk(1, w), &[1, 0, 1]);
        }
    }

    #[test]
    fn length_one_walks_are_just_origins() {
        let g = two_path();
        let ps = PathSet::sample(&g, &WalkConfig { length: 1, walks_per_node: 3, seed: 1 });
        for j in 0..2u32 {
            for w in 0..3 {
                assert_eq!(ps.walk(j, w), &[j]);
            }
        }
    }

    #[test]
    fn isolated_node_walks_stay_put() {
        let g = Graph::from_edge_list(3, &[(0, 1)]).unwrap();
        let ps = PathSet::sample(&g, &WalkConfig { length: 4, walks_per_node: 2, seed: 5 });
        for w in 0..2 {
            assert_eq!(ps.walk(2, w), &[2, 2, 2, 2]);
        }
    }

    #[test]
    fn star_center_first_steps_are_near_uniform() {
        // Center 0, leaves 1..=4: each leaf should catch ~1/4 of first steps.
        let g = Graph::from_edge_list(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let p = 10_000;
        let ps = PathSet::sample(&g, &WalkConfig { length: 2, walks_per_node: p, seed: 17 });
        let mut counts = [0usize; 5];
        for w in 0..p {
            counts[ps.walk(0, w)[1] as usize] += 1;
        }
        assert_eq!(counts[0], 0);
        for leaf in 1..5 {
            let freq = counts[leaf] as f64 / p as f64;
            assert!((freq - 0.25).abs() < 0.02, "leaf {leaf} frequency {freq}");
        }
    }

    #[test]
    fn regular_graph_first_steps_within_five_sigma() {
        // K6 is 5-regular; per-neighbor count over p walks is
        // Binomial(p, 1/5).
        let mut edges = Vec::new();
        for u in 0..6u32 {
            for v in (u + 1)..6 {
                edges.push((u, v));
            }
        }
        let g = Graph::from_edge_list(6, &edges).unwrap();
        let p = 100_000;
        let ps = PathSet::sample(&g, &WalkConfig { length: 2, walks_per_node: p, seed: 23 });
        let expected = p as f64 / 5.0;
        let sigma = (p as f64 * 0.2 * 0.8).sqrt();
        for origin in 0..6u32 {
            let mut counts = [0usize; 6];
            for w in 0..p {
                counts[ps.walk(origin, w)[1] as usize] += 1;
            }
            for &i in g.neighbors(origin) {
                let dev = (counts[i as usize] as f64 - expected).abs();
                assert!(dev < 5.0 * sigma, "origin {origin} neighbor {i} off by {dev}");
            }
        }
    }

    #[test]
    fn identical_configs_give_identical_path_sets() {
        let g = Graph::from_edge_list(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)])
            .unwrap();
        let cfg = WalkConfig { length: 4, walks_per_node: 8, seed: 99 };
        assert_eq!(PathSet::sample(&g, &cfg), PathSet::sample(&g, &cfg));
    }

    #[test]
    fn resample_iterations_differ_but_reproduce() {
        let g = Graph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let cfg = WalkConfig { length: 3, walks_per_node: 4, seed: 7 };
        let a0 = PathSet::resample(&g, &cfg, 0);
        let a1 = PathSet::resample(&g, &cfg, 1);
        assert_ne!(a0, a1);
        assert_eq!(a0, PathSet::resample(&g, &cfg, 0));
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000u64 {
            assert!(seen.insert(derive_seed(1234, i)), "collision at {i}");
        }
    }

    #[test]
    fn dump_layout_is_frozen() {
        let ps = PathSet::from_indices(2, 1, 2, 7, vec![0, 1, 1, 0]).unwrap();
        let mut bytes = Vec::new();
        ps.dump(&mut bytes).unwrap();
        let expected: Vec<u8> = [
            2u32.to_le_bytes().as_slice(),
            1u32.to_le_bytes().as_slice(),
            2u32.to_le_bytes().as_slice(),
            7u64.to_le_bytes().as_slice(),
            0u32.to_le_bytes().as_slice(),
            1u32.to_le_bytes().as_slice(),
            1u32.to_le_bytes().as_slice(),
            0u32.to_le_bytes().as_slice(),
        ]
        .concat();
        assert_eq!(bytes, expected);
    }

    #[test]
    fn dump_then_load_round_trips() {
        let g = Graph::from_edge_list(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        let ps = PathSet::sample(&g, &WalkConfig { length: 3, walks_per_node: 2, seed: 3 });
        let mut bytes = Vec::new();
        ps.dump(&mut bytes).unwrap();
        assert_eq!(PathSet::load(bytes.as_slice()).unwrap(), ps);
    }

    #[test]
    fn load_rejects_truncation_and_bad_origins() {
        let ps = PathSet::from_indices(2, 1, 2, 7, vec![0, 1, 1, 0]).unwrap();
        let mut bytes = Vec::new();
        ps.dump(&mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(PathSet::load(bytes.as_slice()), Err(SamplerError::Malformed(_))));
        assert!(PathSet::from_indices(2, 1, 2, 7, vec![1, 1, 1, 0]).is_err());
        assert!(PathSet::from_indices(2, 1, 2, 7, vec![0, 9, 1, 0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn walks_follow_edges(
            n in 1usize..16,
            raw in prop::collection::vec((0u32..16, 0u32..16), 0..40),
            seed in 0u64..1000,
        ) {
            let edges: Vec<(u32, u32)> = raw
                .into_iter()
                .map(|(u, v)| (u % n as u32, v % n as u32))
                .collect();
            let g = Graph::from_edge_list(n, &edges).unwrap();
            let ps = PathSet::sample(&g, &WalkConfig { length: 4, walks_per_node: 3, seed });
            for j in 0..n as u32 {
                for w in 0..3 {
                    let walk = ps.walk(j, w);
                    prop_assert_eq!(walk[0], j);
                    for step in 1..walk.len() {
                        let (a, b) = (walk[step - 1], walk[step]);
                        let valid = g.has_edge(a, b) || (a == b && g.degree(a) == 0);
                        prop_assert!(valid, "step {}->{} is not an edge", a, b);
                    }
                }
            }
        }
    }
}
