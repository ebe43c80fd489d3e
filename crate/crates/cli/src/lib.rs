//! Experiment driver: configuration, orchestration and artifact output.

pub mod commands;
pub mod config;
pub mod export;
