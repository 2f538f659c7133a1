//! Forward and backward kernels for the layer set the detector uses.
//!
//! Every op is a pure function: forward returns its output (plus whatever
//! cache the backward pass needs), backward takes the upstream gradient and
//! returns gradients for each differentiable input. Layouts are `[C, H, W]`
//! for feature maps, `[C_out, C_in, kH, kW]` for kernels.

mod activation;
mod conv;
pub(crate) mod gemm;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{dropout, dropout_backward, relu, relu_backward, DropoutMask};
pub use conv::{conv2d, conv2d_backward, ConvGrads, Padding};
pub use linear::{
    dense, dense_backward, dense_rows, dense_rows_backward, softmax, softmax_backward, DenseGrads,
};
pub use loss::{
    cross_entropy, cross_entropy_grad_probs, smooth_l1, smooth_l1_grad, softmax_cross_entropy_grad,
};
pub use norm::{batchnorm, batchnorm_backward, BatchNormCache, BatchNormGrads, BatchNormParams};
pub use pool::{maxpool2x2, maxpool2x2_backward, PoolIndices};
