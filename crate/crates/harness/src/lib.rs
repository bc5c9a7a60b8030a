//! File formats, LLM backends and the experiment runner around
//! `council-core`.
//!
//! A run reads a TOML configuration, plans every task of a task file in
//! order with memory shared across tasks, and writes three line-delimited
//! JSON files: per-task metrics followed by a summary, one trace event per
//! search iteration, and optionally the final memory.

pub mod config;
pub mod error;
pub mod gateway;
pub mod memory_io;
pub mod metrics;
pub mod runner;
pub mod tasks;
pub mod trace_io;

pub use config::{Overrides, RunConfig};
pub use error::{ConfigError, FileError};
pub use metrics::{RunMetrics, Summary, TaskRow};
pub use runner::{ablation, run, AblationTable, Axis};
