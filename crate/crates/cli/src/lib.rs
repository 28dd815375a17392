//! Command-line front end: config parsing, data loading, solver dispatch,
//! grid search and result persistence.

pub mod config;
pub mod data;
mod error;
pub mod pca;
pub mod run;

pub use config::{Problem, RunConfig};
pub use error::{CliError, Result};
