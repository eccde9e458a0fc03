//! Files, checkpoints and the command-line front end for Raman spectrum
//! unmixing.
//!
//! The numerical work lives in [`rssnet_core`]; this crate adds everything
//! that touches the operating system:
//!
//! * [`library`]: spectrum text files and packed library documents.
//! * [`dataset`]: dataset directories (manifest, prepared library and
//!   binary sample files) and their regeneration check.
//! * [`checkpoint`]: checksummed parameter and optimizer snapshots.
//! * [`config`]: layered run configuration (built-in defaults, config file,
//!   command-line flags).
//! * [`report`]: JSON score reports with per-sample CSV sidecars.
//! * [`exec`]: a thread-pool executor for batch sharding.
//! * [`cli`]: the `rssnet` subcommands.
//!
//! File layouts are documented in `FORMATS.md` at the repository root.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod exec;
pub mod library;
pub mod report;

mod error;
mod fsio;

pub use error::{Error, Result};
pub use fsio::{sha256_hex, write_json};
