//! Command-line front end for `rydpump`: JSON configs in, CSV/JSON results
//! and SVG plots out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use config::RunConfig;
pub use error::CliError;
