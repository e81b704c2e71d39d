//! Experiment driver around the `ckmplace` library: config parsing and run
//! orchestration, shared by the `ckmplace` binary and its tests.

pub mod config;
pub mod experiment;
