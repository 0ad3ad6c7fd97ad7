//! Batch driver for areal/genetic inference experiments: fitting, held-out
//! prediction, evaluation against gold labelings, synthetic data and radius
//! sweeps. The binary is a thin argument parser over these pipelines.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Mode, RunConfig};
pub use error::CliError;
