//! A small CNN training engine built around Random Padding.
//!
//! Random Padding replaces symmetric zero-padding of thickness `n` with `2n`
//! random draws over four half-border options, so every padded feature map
//! keeps the size traditional padding would give it while the absolute
//! position of its content shifts from sample to sample.
//!
//! The crate also carries the pieces needed to measure the effect: a
//! position-information probe (frozen encoder features read out by a single
//! 3x3 convolution and scored with Spearman correlation and MAE), the
//! benchmark data loaders, input augmentations and the training loop used by
//! the experiment harness.

pub mod augment;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod nn;
pub mod padding;
pub mod pgm;
pub mod probe;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use padding::{Mode, PaddingSpec};
pub use rng::RngStream;
pub use tensor::Tensor;
