//! Binary stochastic filtering (BSF) for neural networks.
//!
//! A BSF layer is a row of independent Bernoulli gates with trainable pass
//! probabilities. Placed at a network's input and pushed down by an L1
//! penalty it ranks input features; placed after hidden layers or
//! convolutions it marks neurons or kernels that can be removed. This crate
//! contains a small deterministic training engine and the three workflows
//! built on it: feature selection, neuron pruning and kernel pruning.

pub mod bsf;
pub mod data;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use bsf::{Bsf, BsfMode, BsfSnapshot, Layout};
pub use data::Dataset;
pub use error::{Error, Result};
pub use nn::{AdamConfig, Layer, Mode, Network};
pub use rng::RngStream;
pub use tensor::Tensor;
