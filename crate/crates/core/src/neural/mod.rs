//! Self-supervised parameter estimation network.
//!
//! A transformer encoder reads one token per frequency offset (channels = one
//! curve per saturation amplitude), a small 1-D convolutional decoder pools the
//! tokens into one raw vector per sample, and the bound map
//! `p = c + d * tanh(f)` turns it into model parameters. Training minimizes the
//! mean squared error between the physical model evaluated at `p` and the input
//! curves; concentration labels never enter.

pub mod autodiff;
mod network;
mod train;

pub use autodiff::{Tape, Tensor, Var};
pub use network::{NetworkConfig, NetworkState, Preset, CHECKPOINT_VERSION};
pub use train::{
    adam_step, bound_map, fold_assignment, infer, predict, reconstruction_loss, train, EpochLoss, FoldResult,
    NetworkData, Prediction, TrainConfig,
};
