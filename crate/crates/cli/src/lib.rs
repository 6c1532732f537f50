//! File formats and the command-line harness around `dpn-core`.
//!
//! * [`dataset`]: CSV datasets.
//! * [`checkpoint`]: JSON network checkpoints.
//! * [`config`]: TOML training settings and flag overrides.
//! * [`report`]: detection reports.
//! * [`manifest`]: per-run manifests.
//! * [`commands`]: the `gen`, `train`, `eval` and `grid` subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod report;

pub use error::{CliError, CliResult};
