//! Minimal dense network engine: layers, Kaiming initialization, forward and
//! backward passes, softmax cross-entropy and plain SGD with per-group rates.
//!
//! All arithmetic is `f64`. Randomness (initialization, dropout masks) comes
//! only from generators passed in by the caller.

mod arch;
mod init;
mod layer;
mod network;
mod serial;
mod tensor;

pub use arch::{transfer_from, ArchSpec, HeadSpec};
pub use init::{kaiming_init, zero_bias};
pub use layer::{agg_block_forward, log_sum_exp, softmax_rows, AggResidualBlock, Branch, Dense, Layer};
pub use network::{forward, sgd_step, Gradients, Group, Mode, Network, Trace};
pub use serial::{LayerSpec, NetworkFile, FORMAT_VERSION};
pub use tensor::Tensor;
