//! Multi-attribute constraint satisfaction for sequence rewriting.
//!
//! The crate is `no_std` (with `alloc`) and holds everything that is pure
//! computation: the threshold-window data model and satisfaction reward,
//! deterministic toy evaluators, edit-pair mining and sampling, the editor
//! contract with its built-in baselines, multi-step inference strategies,
//! and the campaign bookkeeping used by the benchmark harness. File formats,
//! worker processes and the command line live in the `macs` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attr;
pub mod bench;
pub mod editors;
pub mod editpair;
mod error;
pub mod eval;
pub mod inference;
pub mod reward;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};
