//! Configuration, CSV formats and the batch commands of the `cqflow`
//! command line. The numerical engine lives in `cqflow-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod synthetic;

pub use commands::Context;
pub use config::{RawConfig, RunConfig, Scale};
pub use error::{CliError, Result};
