//! Differentiable image operators and the building blocks of a topology-aware
//! segmentation network: a metric-warped adaptive perceptor, a directional
//! refinement decoder, a masked-autoencoder backbone, the multi-task loss, the
//! evaluation metrics, and a seeded synthetic scene generator.
//!
//! The crate is `no_std` (with `alloc`) unless the default `std` feature is
//! enabled. The `std` feature only switches the float intrinsics and the GEMM
//! kernel to their runtime-dispatched implementations.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod atrm;
pub mod autograd;
pub mod backbone;
mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
mod scalar;
pub mod synth;
mod tensor;
pub mod wcap;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
