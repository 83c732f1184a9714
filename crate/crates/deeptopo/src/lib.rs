//! Data generation, training, evaluation and checkpoint tooling around
//! `deeptopo-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod pnm;
pub mod train;

pub use error::{Error, Result};
