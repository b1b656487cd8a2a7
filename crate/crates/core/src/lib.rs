//! Numerical core for planning and validating decoder-only translation model
//! training runs.
//!
//! * [`mixer`] turns raw corpus sizes into temperature-flattened oversampling
//!   plans and materializes the resulting index streams.
//! * [`packer`] lays out sentence pairs with their control tokens, masks the
//!   loss to output positions, packs fixed-length sequences and encodes them in
//!   the `PKSH` shard format.
//! * [`ledger`] counts parameters and estimates FLOPs for GPT-style decoders.
//! * [`lawfit`] fits `L(N) = αN^-p + β` and `L(N, D) = E + a/N^α + b/D^β` by
//!   Huber-loss minimization with a multi-start BFGS optimizer.
//! * [`planner`] inverts fitted laws to answer data, model-size and fixed
//!   compute budget questions.
//!
//! The crate is `no_std` and only needs `alloc`. File IO and the command-line
//! front end live in the `mtscale` crate.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod math;

pub mod lawfit;
pub mod ledger;
pub mod mixer;
pub mod optim;
pub mod packer;
pub mod planner;

pub use error::{Error, Result, ShardError};
