//! Distributed first-order optimization with gradient tracking.
//!
//! The crate simulates synchronous multi-agent optimization over strongly
//! connected graphs: every agent holds a local smooth, strongly convex
//! objective and exchanges iterates with its neighbors through row- and/or
//! column-stochastic weights. The central algorithm is `ABm`, a distributed
//! heavy-ball method that mixes the estimates with a row-stochastic matrix,
//! tracks the global gradient with a column-stochastic matrix and adds a
//! per-agent momentum term. Its relatives (AB, DIGing/Aug-DGM, EXTRA,
//! ADD-OPT/Push-DIGing, FROST) and the average-consensus protocols it induces
//! live next to it so they can be compared on equal footing.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are what most callers want.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod consensus;
pub mod engines;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod objectives;
pub mod scalar;
pub mod weights;

pub use analysis::{
    fit_linear_rate, gd_rate_oracle, iterations_to_threshold, LinearFit, Termination, Trace, TraceMeta, TraceRecord,
};
pub use consensus::{ConsensusForm, ConsensusSystem};
pub use engines::{Algorithm, AlgorithmState, EngineConfig, EngineKind, RunOptions};
pub use error::{Error, Result};
pub use graph::{Digraph, NearestNeighbor};
pub use linalg::{Csr, Mat};
pub use objectives::{LocalObjective, ObjectiveSuite};
pub use scalar::Real;
pub use weights::{StochasticKind, WeightMatrix};

pub type Mat64 = Mat<f64>;
pub type WeightMatrix64 = WeightMatrix<f64>;
pub type ObjectiveSuite64 = ObjectiveSuite<f64>;
pub type AlgorithmState64 = AlgorithmState<f64>;
pub type EngineConfig64 = EngineConfig<f64>;
pub type ConsensusSystem64 = ConsensusSystem<f64>;
pub type Trace64 = Trace<f64>;

pub type Mat32 = Mat<f32>;
pub type WeightMatrix32 = WeightMatrix<f32>;
pub type ObjectiveSuite32 = ObjectiveSuite<f32>;
pub type EngineConfig32 = EngineConfig<f32>;
pub type Trace32 = Trace<f32>;
