//! Dense row-major tensors of `f64` scalars.
//!
//! A [`Tensor`] is an immutable value snapshot: the element buffer is shared
//! behind an `Arc`, so clones are cheap and tensors can be handed across
//! threads freely. Mutation goes through [`Tensor::data_mut`], which performs
//! copy-on-write when the buffer is shared.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor from a shape and a row-major element buffer.
    ///
    /// Panics if `product(shape) != data.len()`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {:?} implies {} elements, got {}",
            shape,
            numel,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor::new(shape, vec![value; numel])
    }

    /// A single-element tensor holding `value` (used for scalar losses).
    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    /// Samples every element from `N(0, std^2)`.
    pub fn randn<R: Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and positive");
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        Tensor::new(shape, data)
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, (0..numel).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable element access; clones the buffer first if it is shared.
    pub fn data_mut(&mut self) -> &mut [f64] {
        let vec: &mut Vec<f64> = Arc::make_mut(&mut self.data);
        vec.as_mut_slice()
    }

    /// Replaces the shape without touching the elements.
    ///
    /// Panics if the element count differs.
    pub fn reshaped(&self, shape: Vec<usize>) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            self.numel(),
            "cannot reshape {:?} ({} elements) to {:?}",
            self.shape,
            self.numel(),
            shape
        );
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    /// Element at a 2-D index; the tensor must be 2-D.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        assert_eq!(self.shape.len(), 2, "at2 needs a 2-D tensor");
        self.data[i * self.shape[1] + j]
    }

    /// Element at a 3-D index; the tensor must be 3-D.
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f64 {
        assert_eq!(self.shape.len(), 3, "at3 needs a 3-D tensor");
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute difference against another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
