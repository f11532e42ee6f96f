//! Dense deterministic numerics shared by every other module.

mod func;
mod matrix;
mod rng;
mod scalar;

pub use func::{
    affine, clip_by_global_norm, cumax, cumax_backward_into, cumax_into, global_norm,
    inverse_sigmoid, rng_uniform, sigmoid, sigmoid_vec, softmax, softmax_into, tanh_act,
    tanh_vec,
};
pub use matrix::{gemm, Matrix, Vector};
pub use rng::Rng;
pub use scalar::{Precision, Scalar};
