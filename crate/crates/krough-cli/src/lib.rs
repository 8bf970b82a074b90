//! Experiment driver: configuration, study orchestration, CSV output and
//! run manifests.

pub mod commands;
pub mod config;
pub mod output;
