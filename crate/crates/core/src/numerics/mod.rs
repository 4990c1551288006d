//! Dense kernels, activations, losses, Adam and gradient checking.
//!
//! Everything runs in `f64`. Models own their parameters through the
//! [`Params`] trait so that the optimizer, the gradient checker and the
//! checkpoint writer work on any architecture without knowing its layout.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod matrix;
mod ops;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::grad_check;
pub use layer::DenseLayer;
pub use matrix::{axpy, dot, euclidean_distance, norm, Matrix};
pub(crate) use ops::{cosine, cosine_backward};
pub use ops::{
    cosine_similarity, sigmoid, softmax, softmax_backward_in_place, softmax_cross_entropy,
    softmax_in_place, sse_loss, Activation, COSINE_NORM_FLOOR,
};
pub use params::{Params, TensorList};
