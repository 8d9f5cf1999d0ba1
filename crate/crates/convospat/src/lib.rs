//! File formats, configuration and commands for the tapered
//! process-convolution count model in `convospat-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod samples;

pub use commands::{run, Outcome};
pub use config::{Command, Overrides, RunConfig};
pub use error::{CliError, Result};
