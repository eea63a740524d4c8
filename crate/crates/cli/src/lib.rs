//! Pipeline orchestration and file exports for the `windcorr` tool.

pub mod commands;
pub mod export;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod stages;

pub use pipeline::{run_pipeline, RunConfig, RunOptions, RunSummary};
