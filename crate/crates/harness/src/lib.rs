//! Experiment harness: TOML configs, orchestration of graph, weights,
//! objectives and engines, and CSV/plot-script output.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod plot;

pub use config::{ConsensusSpec, EngineSpec, ExperimentConfig, GraphSpec, ObjectiveSpec, RunSpec, StepSpec, TuneSpec};
pub use experiment::{
    build_problem, generate_graph_artifacts, run_condition_sweep, run_consensus_experiment, run_experiment, run_tuning,
    ConsensusReport, ExperimentReport, Problem, SweepReport,
};
