//! Hierarchical binary-classifier trees trained from scratch in pure Rust.
//!
//! The crate ships a small dense network engine ([`nnet`]), learning-rate
//! machinery ([`sched`]: LR range test, SGDR warm restarts, discriminative
//! per-group rates), a fixed three-node classifier tree ([`hierarchy`]),
//! a synthetic image pipeline ([`datapipe`]), staged transfer training
//! ([`train`]), evaluation reports ([`eval`]) and the CLI plumbing ([`cli`]).

pub mod cli;
pub mod datapipe;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod io;
pub mod nnet;
pub mod sched;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
