//! Benchmark harness for multi-attribute constrained rewriting: campaign
//! configs, pool and training-example files, external worker connections,
//! parallel campaign execution, reports and the `macs` command line.

pub mod cache;
pub mod campaign;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod protocol;
pub mod report;

pub use error::{Error, Result};
