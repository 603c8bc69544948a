//! Dense tensors, trainable layers and the optimizers used by both stages.
//!
//! There is no autodiff tape: every composite model wires its own backward
//! pass out of the per-layer `*_backward` functions here, and
//! [`gradcheck`] is how those hand-written passes are validated.

pub mod activation;
pub mod affine;
pub mod conv3d;
pub mod dropout;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tensor;

pub use activation::{relu, sigmoid, softmax, softmax_rows, Activation};
pub use affine::{affine, affine_backward, Affine};
pub use conv3d::{conv3d, conv3d_backward, conv3d_output_shape, Conv3d};
pub use dropout::{dropout, dropout_backward};
pub use gradcheck::{grad_check, grad_check_params, GradCheckConfig, GradCheckReport};
pub use optim::Optimizer;
pub use params::{glorot_uniform, Param, ParamId, ParamSet, TensorRecord};
pub use tensor::Tensor;
