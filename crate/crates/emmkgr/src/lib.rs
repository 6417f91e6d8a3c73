//! Command-line front end and file-format layer over the core engine:
//! dataset/graph/checkpoint formats, run manifests, and the pipeline
//! subcommands.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
