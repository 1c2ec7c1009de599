//! Dense tensor kernels with hand-derived gradients, a finite-difference
//! checker and the Adam optimizer.

mod adam;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::finite_diff_check;
pub use ops::{
    conv1d_same, conv1d_same_backward, l2_normalize, l2_normalize_backward, l2_normalize_with_floor,
    mean_over_positions, mean_over_positions_backward, relu, relu_backward, ConvGrads, NORM_FLOOR,
};
pub(crate) use ops::dot;
pub use tensor::Tensor;
