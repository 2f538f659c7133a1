//! File formats, dataset layout and the `massdet` command line on top of
//! [`massdet_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod overlay;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
