//! Differentiable building blocks for the autoencoder.

pub mod gradcheck;
pub mod layers;
pub mod reparam;
pub mod sequential;

pub use gradcheck::{check_gradients, relative_error, GradCheck};
pub use layers::{
    group_softmax_backward, group_softmax_forward, relu_backward, relu_forward, Affine, BatchNorm,
    BatchNormCache, BN_EPSILON, BN_MOMENTUM,
};
pub use reparam::{reparameterize, reparameterize_backward, ReparamMode};
pub use sequential::{Gradients, Layer, Mode, Sequential, Tape};
