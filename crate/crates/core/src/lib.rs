// SPDX-License-Identifier: Apache-2.0

//! Path-counting matrices over a graph, distribution-aware points of view,
//! and an outlier detector built on them.

pub mod container;
pub mod error;
pub mod eval;
pub mod graph;
pub mod id_model;
pub mod monoid;
pub mod pov;
pub mod scalar;
pub mod smult;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{adjacency, load_attributed_graph, AttributedGraph, NodeId};
pub use pov::{NodeDistribution, PovConfig, PovResult};
pub use sparse::SparseMatrix;

pub type SparseMatrixF64 = SparseMatrix<f64>;
pub type SparseMatrixF32 = SparseMatrix<f32>;
/// Exact path counts.
pub type PathCountMatrix = SparseMatrix<i64>;
pub type PovResultF64 = PovResult<f64>;
pub type PovResultF32 = PovResult<f32>;
pub type NodeDistributionF64 = NodeDistribution<f64>;
pub type IdModelStateF64 = id_model::IdModelState<f64>;
pub type ScoreReportF64 = id_model::ScoreReport<f64>;
