//! Path-based graph convolution.
//!
//! A graph neural network whose spatial operator is learned from random
//! walks: node features are gathered along sampled paths and mixed by a
//! learnable kernel, either stochastically (Monte-Carlo over a fresh path
//! set each step) or deterministically (the closed-form expectation over
//! walk distributions). The crate provides the graph primitives, the path
//! sampler, the convolution with exact hand-derived gradients, the small
//! neural-net toolkit around it, and a full-batch trainer for transductive
//! node classification.
//!
//! Determinism contract: every operation that consumes randomness is driven
//! by explicit seeds, and every parallel loop either owns disjoint output
//! rows or reduces partials in a fixed order, so results are bitwise
//! identical across runs and thread counts.

pub mod bundle;
pub mod conv;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod sampler;
pub mod synth;
pub mod verify;

pub use bundle::{GraphBundle, Split};
pub use conv::{KernelVariant, SpatialKernel};
pub use graph::Graph;
pub use matrix::FeatureMatrix;
pub use model::{ConvMode, ModelConfig, PathGcnModel, TrainReport};
pub use sampler::{PathSet, WalkConfig};
