//! Execution context abstraction: the same model code runs either on the
//! recording graph ([`crate::autograd::Tape`], for training and gradient
//! checks) or on plain values ([`Infer`], for inference where intermediate
//! activations are dropped as soon as they go out of scope).

use crate::ops;
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

pub trait Engine {
    type V: Clone;

    /// Introduces a constant (non-parameter) input.
    fn leaf(&mut self, t: Tensor) -> Self::V;
    /// Introduces a model parameter by id.
    fn param(&mut self, id: ParamId) -> Self::V;
    /// Reads the concrete value behind a handle.
    fn value(&self, v: &Self::V) -> Tensor;

    fn conv2d(&mut self, x: &Self::V, w: &Self::V, b: &Self::V, stride: usize, pad: usize) -> Self::V;
    fn conv1d(&mut self, x: &Self::V, w: &Self::V, b: &Self::V) -> Self::V;
    fn maxpool2d(&mut self, x: &Self::V) -> Self::V;
    fn upsample2x(&mut self, x: &Self::V) -> Self::V;
    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn transpose(&mut self, a: &Self::V) -> Self::V;
    fn softmax_rows(&mut self, x: &Self::V) -> Self::V;
    fn relu(&mut self, x: &Self::V) -> Self::V;
    fn concat(&mut self, axis: usize, parts: &[Self::V]) -> Self::V;
    fn reshape(&mut self, x: &Self::V, shape: &[usize]) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, x: &Self::V, c: f64) -> Self::V;
    fn sum_all(&mut self, x: &Self::V) -> Self::V;
    fn mse(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
}

/// Value-only execution over a parameter set; no graph is recorded.
pub struct Infer<'a> {
    params: &'a ParamSet,
}

impl<'a> Infer<'a> {
    pub fn new(params: &'a ParamSet) -> Self {
        Infer { params }
    }
}

impl Engine for Infer<'_> {
    type V = Tensor;

    fn leaf(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn param(&mut self, id: ParamId) -> Tensor {
        self.params.value(id).clone()
    }

    fn value(&self, v: &Tensor) -> Tensor {
        v.clone()
    }

    fn conv2d(&mut self, x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        ops::conv2d(x, w, b, stride, pad)
    }

    fn conv1d(&mut self, x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        ops::conv1d(x, w, b)
    }

    fn maxpool2d(&mut self, x: &Tensor) -> Tensor {
        ops::maxpool2d(x)
    }

    fn upsample2x(&mut self, x: &Tensor) -> Tensor {
        ops::bilinear_upsample2x(x)
    }

    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        ops::matmul(a, b)
    }

    fn transpose(&mut self, a: &Tensor) -> Tensor {
        ops::transpose2d(a)
    }

    fn softmax_rows(&mut self, x: &Tensor) -> Tensor {
        ops::softmax_rows(x)
    }

    fn relu(&mut self, x: &Tensor) -> Tensor {
        ops::relu(x)
    }

    fn concat(&mut self, axis: usize, parts: &[Tensor]) -> Tensor {
        let refs: Vec<&Tensor> = parts.iter().collect();
        ops::concat(axis, &refs)
    }

    fn reshape(&mut self, x: &Tensor, shape: &[usize]) -> Tensor {
        x.reshaped(shape.to_vec())
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        ops::add(a, b)
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        ops::mul(a, b)
    }

    fn scale(&mut self, x: &Tensor, c: f64) -> Tensor {
        ops::scale(x, c)
    }

    fn sum_all(&mut self, x: &Tensor) -> Tensor {
        ops::sum_all(x)
    }

    fn mse(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        ops::mse(a, b)
    }
}
