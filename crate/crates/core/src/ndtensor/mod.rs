//! Dense tensors, broadcasting kernels and the reverse-mode tape.

pub mod io;
pub mod kernels;
mod tape;
mod tensor;

pub use kernels::{conv_out_len, BatchStats, ConvGeometry};
pub use tape::{Fault, Gradients, Tape, Var};
pub use tensor::{broadcast_shape, strides, BinaryOp, ReduceOp, Tensor, MAX_RANK};

/// Value-level (untracked) kernels, exposed for oracles and inference helpers.
pub mod ops {
    pub use super::kernels::{batchnorm_forward, conv3d_forward};
    use super::tensor;
    use super::Tensor;
    use crate::error::Result;
    use crate::scalar::Scalar;

    pub fn elementwise<T: Scalar>(op: super::BinaryOp, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::elementwise(op, a, b)
    }

    pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        tensor::matmul(a, b)
    }

    pub fn reduce<T: Scalar>(op: super::ReduceOp, x: &Tensor<T>, axes: &[usize], keepdims: bool) -> Result<Tensor<T>> {
        Ok(tensor::reduce(op, x, axes, keepdims)?.value)
    }

    pub fn softmax_lastaxis<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
        tensor::softmax_lastaxis(x)
    }

    pub fn permute<T: Scalar>(x: &Tensor<T>, order: &[usize]) -> Result<Tensor<T>> {
        tensor::permute(x, order)
    }

    pub fn concat<T: Scalar>(xs: &[&Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        tensor::concat(xs, axis)
    }

    pub fn slice<T: Scalar>(x: &Tensor<T>, ranges: &[(usize, usize)]) -> Result<Tensor<T>> {
        tensor::slice(x, ranges)
    }

    pub fn sigmoid<T: Scalar>(x: T) -> T {
        super::tape::sigmoid(x)
    }
}
