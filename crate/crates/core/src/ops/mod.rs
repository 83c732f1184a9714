//! Differentiable operators, implemented as methods on [`Graph`](crate::Graph).
//!
//! Image tensors are unbatched `C×H×W`; token matrices are `N×D`.
//!
//! Coordinate convention, used by every sampling operator: pixel `(i, j)` has
//! its center at continuous coordinate `(i, j)` (row, column). Reads outside
//! `[0, H−1]×[0, W−1]` see zero padding. The ×2 upsampler maps output pixel
//! `o` to input coordinate `o / 2`, so output pixel `2i` sits exactly on input
//! pixel `i`; the half-step past the last input row/column is clamped onto it.

mod conv;
mod elementwise;
mod linalg;
mod norm;
mod reduce;
mod sample;
mod shape;

pub use conv::conv_output_size;
pub use conv::{dense_taps, Tap};
pub use elementwise::{sigmoid as sigmoid_scalar, softplus as softplus_scalar};
pub use norm::{BatchStats, BATCH_NORM_EPS, LAYER_NORM_EPS};
pub use sample::bilinear_weights;
pub use sample::Footprint;
pub use shape::{patchify, unpatchify};
