//! Slow, direct translations of the three convolution passes.
//!
//! Everything here accumulates in `f64` and rounds to `f32` once per stored
//! element, so these are the ground truth the tiled kernels are checked
//! against. The `*_gemm_baseline` functions reach the same results through
//! im2col/col2im lowering and a matrix product.

mod gemm;
mod naive;

pub use gemm::{
    backward_gemm_baseline, col2im, forward_gemm_baseline, im2col, matmul, wgrad_gemm_baseline, Im2colMatrix,
};
pub use naive::{backward_naive, forward_f64, forward_naive, wgrad_naive};

pub(crate) use naive::forward_naive_counted;
