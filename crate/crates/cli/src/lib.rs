//! Configuration, sweeps, figure presets and validation behind the
//! `pcp-mmwave` binary.

pub mod config;
pub mod error;
pub mod presets;
pub mod sweep;
pub mod validate;

pub use error::CliError;
