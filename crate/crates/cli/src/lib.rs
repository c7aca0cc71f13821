//! Orchestration behind the `sodbench` binary: configuration, the verbs and
//! report writers.

pub mod commands;
pub mod config;
pub mod report;
