//! Experiment specs, orchestration, property suites and file output used by
//! the `contract-sa` binary.

pub mod bound_curves;
pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;
