//! Differentiable primitives: convolutions, pooling, upsampling,
//! activations, loss and the finite-difference gradient checker.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod pool;
pub mod testutil;

pub use activation::{
    branch_average, branch_average_backward, relu, relu_backward, sigmoid, sigmoid_backward,
};
pub use conv::{
    conv3d_backward, conv3d_backward_input, conv3d_backward_params, conv3d_forward,
    swap_oi, tconv3d_backward, tconv3d_forward, tconv_out_shape, ConvSpec,
};
pub use gradcheck::{finite_diff_check, finite_diff_check_sampled};
pub use loss::{bce_loss, BCE_EPS};
pub use pool::{
    maxpool_122, maxpool_122_backward, upsample_122, upsample_122_backward, PoolIndices,
};
