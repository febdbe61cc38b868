//! Learning directed acyclic graphs by optimizing over node orderings.
//!
//! A score vector `theta` induces a sparse distribution over permutations
//! (top-k sparsemax or SparseMAP). Every permutation fixes a complete DAG
//! whose edges are then pruned by a sparse linear estimator, so each graph
//! visited during training is acyclic by construction.

pub mod data;
pub mod datagen;
pub mod error;
pub mod graph;
pub mod learner;
pub mod metrics;
pub mod perm;
pub mod seed;
pub mod sem;
pub mod sparse;

pub use data::Dataset;
pub use error::{Error, Result};
pub use graph::{Adjacency, EdgeMask};
pub use perm::Permutation;
