//! Forward kernels and their adjoints for every graph primitive.
//!
//! These are plain functions over [`Tensor`](crate::tensor::Tensor) values;
//! the autodiff graph in [`crate::autograd`] records calls to them and replays
//! the adjoints in reverse. Shape contract violations panic with a message
//! naming the offending operation.

pub mod conv;
pub mod elem;
pub mod matrix;
pub mod spatial;

pub use conv::{conv1d, conv1d_backward, conv2d, conv2d_backward};
pub use elem::{add, concat, concat_backward, mse, mse_backward, mul, relu, relu_backward, scale, sum_all};
pub use matrix::{matmul, matmul_backward, softmax_rows, softmax_rows_backward, transpose2d};
pub use spatial::{bilinear_upsample2x, bilinear_upsample2x_backward, maxpool2d, maxpool2d_backward};
