//! Smelter: a from-scratch CNN transfer-learning toolkit.
//!
//! The crate provides the pieces of a smile-detection-style pipeline:
//! landmark-based face alignment, a 16-layer VGG topology and a small 4-conv
//! CNN, tape-based backpropagation, SGD fine-tuning with frozen layers,
//! stratified k-fold evaluation, and Gaussian noise/blur robustness sweeps.

pub mod data;
pub mod distort;
mod error;
pub mod eval;
pub mod imageproc;
pub mod net;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
