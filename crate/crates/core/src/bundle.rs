//! On-disk dataset format: a directory ("bundle") holding
//!
//! * `graph.edges`    one `u v` pair per line, undirected
//! * `features.csv`   n rows of c comma-separated reals
//! * `labels.csv`     n integers, one per line
//! * `splits.json`    a `{train, val, test}` object, or an array of them
//! * `meta.json`      `{name, n, c, num_classes}`
//!
//! Everything is text so other toolchains can produce or consume bundles.
//! Loading validates row counts against the meta, label ranges, and split
//! disjointness; every parse error names the file and line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {detail}")]
    Malformed { file: &'static str, line: usize, detail: String },
    #[error("{file}: expected {expected} rows, found {found}")]
    CountMismatch { file: &'static str, expected: usize, found: usize },
    #[error("{file}: {source}")]
    Json {
        file: &'static str,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid split {index}: {detail}")]
    InvalidSplit { index: usize, detail: String },
    #[error("invalid graph: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("label {label} at row {row} exceeds num_classes {classes}")]
    LabelOutOfRange { label: usize, row: usize, classes: usize },
}

/// Disjoint train/val/test node-index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl Split {
    /// Checks every index is below `n` and the three sets are pairwise
    /// disjoint. `index` only labels the error message.
    pub fn validate(&self, n: usize, index: usize) -> Result<(), BundleError> {
        let mut seen = vec![0u8; n];
        for (set, name) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for &node in set {
                if node as usize >= n {
                    return Err(BundleError::InvalidSplit {
                        index,
                        detail: format!("{name} index {node} out of range for {n} nodes"),
                    });
                }
                if seen[node as usize] != 0 {
                    return Err(BundleError::InvalidSplit {
                        index,
                        detail: format!("node {node} appears in more than one set"),
                    });
                }
                seen[node as usize] = 1;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Meta {
    name: String,
    n: usize,
    c: usize,
    num_classes: usize,
}

/// One split object or several (multi-split datasets).
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SplitsFile {
    One(Split),
    Many(Vec<Split>),
}

/// A fully loaded dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBundle {
    pub name: String,
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub splits: Vec<Split>,
}

fn read(dir: &Path, file: &'static str) -> Result<String, BundleError> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(|source| BundleError::Io { path, source })
}

impl GraphBundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        let dir = dir.as_ref();
        let meta: Meta = serde_json::from_str(&read(dir, "meta.json")?)
            .map_err(|source| BundleError::Json { file: "meta.json", source })?;

        let mut edges = Vec::new();
        for (lineno, line) in read(dir, "graph.edges")?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<u32, BundleError> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| BundleError::Malformed {
                    file: "graph.edges",
                    line: lineno + 1,
                    detail: format!("expected two node ids, got {line:?}"),
                })
            };
            let u = parse(it.next())?;
            let v = parse(it.next())?;
            if it.next().is_some() {
                return Err(BundleError::Malformed {
                    file: "graph.edges",
                    line: lineno + 1,
                    detail: format!("trailing tokens in {line:?}"),
                });
            }
            edges.push((u, v));
        }
        let graph = Graph::from_edge_list(meta.n, &edges)?;

        let mut data = Vec::with_capacity(meta.n * meta.c);
        let mut rows = 0usize;
        for (lineno, line) in read(dir, "features.csv")?.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| BundleError::Malformed {
                    file: "features.csv",
                    line: lineno + 1,
                    detail: format!("bad real {tok:?}"),
                })?;
                data.push(v);
            }
            if data.len() - before != meta.c {
                return Err(BundleError::Malformed {
                    file: "features.csv",
                    line: lineno + 1,
                    detail: format!("expected {} values, found {}", meta.c, data.len() - before),
                });
            }
            rows += 1;
        }
        if rows != meta.n {
            return Err(BundleError::CountMismatch {
                file: "features.csv",
                expected: meta.n,
                found: rows,
            });
        }
        let features = FeatureMatrix::from_vec(meta.n, meta.c, data);

        let mut labels = Vec::with_capacity(meta.n);
        for (lineno, line) in read(dir, "labels.csv")?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let label: usize = line.parse().map_err(|_| BundleError::Malformed {
                file: "labels.csv",
                line: lineno + 1,
                detail: format!("bad label {line:?}"),
            })?;
            if label >= meta.num_classes {
                return Err(BundleError::LabelOutOfRange {
                    label,
                    row: lineno + 1,
                    classes: meta.num_classes,
                });
            }
            labels.push(label);
        }
        if labels.len() != meta.n {
            return Err(BundleError::CountMismatch {
                file: "labels.csv",
                expected: meta.n,
                found: labels.len(),
            });
        }

        let splits_file: SplitsFile = serde_json::from_str(&read(dir, "splits.json")?)
            .map_err(|source| BundleError::Json { file: "splits.json", source })?;
        let splits = match splits_file {
            SplitsFile::One(s) => vec![s],
            SplitsFile::Many(v) => v,
        };
        if splits.is_empty() {
            return Err(BundleError::InvalidSplit { index: 0, detail: "no splits".into() });
        }
        for (i, s) in splits.iter().enumerate() {
            s.validate(meta.n, i)?;
        }

        Ok(Self {
            name: meta.name,
            graph,
            features,
            labels,
            num_classes: meta.num_classes,
            splits,
        })
    }

    /// Writes the bundle in the exact format [`GraphBundle::load`] reads.
    /// Reals use the shortest round-trip decimal form, so save then load
    /// reproduces the structure bit for bit.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), BundleError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)
            .map_err(|source| BundleError::Io { path: dir.to_path_buf(), source })?;
        let write = |file: &'static str, contents: String| -> Result<(), BundleError> {
            let path = dir.join(file);
            fs::write(&path, contents).map_err(|source| BundleError::Io { path, source })
        };

        let n = self.graph.node_count();
        let meta = Meta {
            name: self.name.clone(),
            n,
            c: self.features.cols(),
            num_classes: self.num_classes,
        };
        let mut meta_json = serde_json::to_string_pretty(&meta).expect("meta serializes");
        meta_json.push('\n');
        write("meta.json", meta_json)?;

        let mut edges = String::new();
        for u in 0..n as u32 {
            for &v in self.graph.neighbors(u) {
                if v >= u {
                    writeln!(edges, "{u} {v}").expect("string write");
                }
            }
        }
        write("graph.edges", edges)?;

        let mut feats = String::new();
        for i in 0..n {
            let row = self.features.row(i);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    feats.push(',');
                }
                write!(feats, "{v}").expect("string write");
            }
            feats.push('\n');
        }
        write("features.csv", feats)?;

        let mut labels = String::new();
        for &l in &self.labels {
            writeln!(labels, "{l}").expect("string write");
        }
        write("labels.csv", labels)?;

        let splits_json = if self.splits.len() == 1 {
            serde_json::to_string_pretty(&self.splits[0])
        } else {
            serde_json::to_string_pretty(&self.splits)
        }
        .expect("splits serialize");
        write("splits.json", splits_json + "\n")
    }

    /// Packages a synthetic dataset as a single-split bundle.
    pub fn from_synth(name: &str, d: crate::synth::SynthDataset) -> Self {
        Self {
            name: name.to_string(),
            graph: d.graph,
            features: d.features,
            labels: d.labels,
            num_classes: d.num_classes,
            splits: vec![Split { train: d.train, val: d.val, test: d.test }],
        }
    }
}
