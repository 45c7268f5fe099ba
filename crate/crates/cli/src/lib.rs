//! Batch experiment harness around the inference engine.
//!
//! Subcommands: `gen-ref` (persist reference observations), `run` (one
//! configured inference run with evaluation), `sweep` (a task × method ×
//! N × seed grid with an aggregate table), and `report` (re-aggregate an
//! existing metrics table). Everything on disk is plain text and
//! reproducible from the config and seed.

pub mod config;
pub mod error;
pub mod metrics;
pub mod refgen;
pub mod run;
pub mod sweep;

pub use config::{Method, RunConfig, TaskOptions};
pub use error::CliError;
