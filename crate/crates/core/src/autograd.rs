//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes; the graph is
//! rebuilt on every pass. [`Tape::backward`] seeds the scalar loss with 1 and
//! walks the node list in reverse, accumulating gradients into parents. The
//! walk order and every accumulation order are fixed, so gradients are
//! bit-identical across repeated runs on the same graph.

use crate::engine::Engine;
use crate::ops;
use crate::params::{Gradients, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Conv1d { x: Var, w: Var, b: Var },
    MaxPool2d { x: Var },
    Upsample2x { x: Var },
    MatMul { a: Var, b: Var },
    Transpose { a: Var },
    SoftmaxRows { x: Var },
    Relu { x: Var },
    Concat { axis: usize, parts: Vec<Var> },
    Reshape { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    SumAll { x: Var },
    Mse { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

pub struct Tape<'a> {
    params: &'a ParamSet,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        Var(id)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn add_grad(&mut self, v: Var, g: Tensor) {
        match &mut self.nodes[v.0].grad {
            Some(existing) => {
                let dst = existing.data_mut();
                for (d, s) in dst.iter_mut().zip(g.data().iter()) {
                    *d += s;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Gradient of the last backward pass w.r.t. a node, if it received one.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Clears all node gradients so backward can run again from scratch.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Panics if `loss` is not a single-element tensor.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(
            self.nodes[loss.0].value.numel(),
            1,
            "backward: loss must be scalar, got shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        self.add_grad(loss, Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = self.nodes[i].grad.clone() else {
                continue;
            };
            match &self.nodes[i].op {
                Op::Leaf { .. } => {}
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (x, w, b, stride, pad) = (*x, *w, *b, *stride, *pad);
                    let g = ops::conv2d_backward(self.val(x), self.val(w), stride, pad, dy.data());
                    self.add_grad(x, g.dx);
                    self.add_grad(w, g.dw);
                    self.add_grad(b, g.db);
                }
                Op::Conv1d { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let g = ops::conv1d_backward(self.val(x), self.val(w), dy.data());
                    self.add_grad(x, g.dx);
                    self.add_grad(w, g.dw);
                    self.add_grad(b, g.db);
                }
                Op::MaxPool2d { x } => {
                    let x = *x;
                    let dx = ops::maxpool2d_backward(self.val(x), dy.data());
                    self.add_grad(x, dx);
                }
                Op::Upsample2x { x } => {
                    let x = *x;
                    let dx = ops::bilinear_upsample2x_backward(self.val(x).shape(), dy.data());
                    self.add_grad(x, dx);
                }
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let (da, db) = ops::matmul_backward(self.val(a), self.val(b), dy.data());
                    self.add_grad(a, da);
                    self.add_grad(b, db);
                }
                Op::Transpose { a } => {
                    let a = *a;
                    self.add_grad(a, ops::transpose2d(&dy));
                }
                Op::SoftmaxRows { x } => {
                    let x = *x;
                    let y = self.nodes[i].value.clone();
                    self.add_grad(x, ops::softmax_rows_backward(&y, dy.data()));
                }
                Op::Relu { x } => {
                    let x = *x;
                    let y = self.nodes[i].value.clone();
                    self.add_grad(x, ops::relu_backward(&y, dy.data()));
                }
                Op::Concat { axis, parts } => {
                    let (axis, parts) = (*axis, parts.clone());
                    let shapes: Vec<Vec<usize>> =
                        parts.iter().map(|p| self.val(*p).shape().to_vec()).collect();
                    let grads = ops::concat_backward(axis, &shapes, dy.data());
                    for (p, g) in parts.into_iter().zip(grads) {
                        self.add_grad(p, g);
                    }
                }
                Op::Reshape { x } => {
                    let x = *x;
                    let shape = self.val(x).shape().to_vec();
                    self.add_grad(x, dy.reshaped(shape));
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.add_grad(a, dy.clone());
                    self.add_grad(b, dy);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = ops::mul(self.val(b), &dy);
                    let db = ops::mul(self.val(a), &dy);
                    self.add_grad(a, da);
                    self.add_grad(b, db);
                }
                Op::Scale { x, c } => {
                    let (x, c) = (*x, *c);
                    self.add_grad(x, ops::scale(&dy, c));
                }
                Op::SumAll { x } => {
                    let x = *x;
                    let g = dy.data()[0];
                    let shape = self.val(x).shape().to_vec();
                    self.add_grad(x, Tensor::full(shape, g));
                }
                Op::Mse { a, b } => {
                    let (a, b) = (*a, *b);
                    let (da, db) = ops::mse_backward(self.val(a), self.val(b), dy.data()[0]);
                    self.add_grad(a, da);
                    self.add_grad(b, db);
                }
            }
        }
    }

    /// Collects parameter gradients accumulated by the last backward pass.
    pub fn param_grads(&self) -> Gradients {
        let mut grads = Gradients::zeros(self.params);
        for node in &self.nodes {
            if let Op::Leaf { param: Some(id) } = node.op {
                if let Some(g) = &node.grad {
                    grads.accumulate(id, g);
                }
            }
        }
        grads
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

impl Engine for Tape<'_> {
    type V = Var;

    fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf { param: None })
    }

    fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.value(id).clone();
        self.push(value, Op::Leaf { param: Some(id) })
    }

    fn value(&self, v: &Var) -> Tensor {
        self.val(*v).clone()
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, stride: usize, pad: usize) -> Var {
        let y = ops::conv2d(self.val(*x), self.val(*w), self.val(*b), stride, pad);
        self.push(y, Op::Conv2d { x: *x, w: *w, b: *b, stride, pad })
    }

    fn conv1d(&mut self, x: &Var, w: &Var, b: &Var) -> Var {
        let y = ops::conv1d(self.val(*x), self.val(*w), self.val(*b));
        self.push(y, Op::Conv1d { x: *x, w: *w, b: *b })
    }

    fn maxpool2d(&mut self, x: &Var) -> Var {
        let y = ops::maxpool2d(self.val(*x));
        self.push(y, Op::MaxPool2d { x: *x })
    }

    fn upsample2x(&mut self, x: &Var) -> Var {
        let y = ops::bilinear_upsample2x(self.val(*x));
        self.push(y, Op::Upsample2x { x: *x })
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let y = ops::matmul(self.val(*a), self.val(*b));
        self.push(y, Op::MatMul { a: *a, b: *b })
    }

    fn transpose(&mut self, a: &Var) -> Var {
        let y = ops::transpose2d(self.val(*a));
        self.push(y, Op::Transpose { a: *a })
    }

    fn softmax_rows(&mut self, x: &Var) -> Var {
        let y = ops::softmax_rows(self.val(*x));
        self.push(y, Op::SoftmaxRows { x: *x })
    }

    fn relu(&mut self, x: &Var) -> Var {
        let y = ops::relu(self.val(*x));
        self.push(y, Op::Relu { x: *x })
    }

    fn concat(&mut self, axis: usize, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.val(*p)).collect();
        let y = ops::concat(axis, &tensors);
        self.push(y, Op::Concat { axis, parts: parts.to_vec() })
    }

    fn reshape(&mut self, x: &Var, shape: &[usize]) -> Var {
        let y = self.val(*x).reshaped(shape.to_vec());
        self.push(y, Op::Reshape { x: *x })
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let y = ops::add(self.val(*a), self.val(*b));
        self.push(y, Op::Add { a: *a, b: *b })
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let y = ops::mul(self.val(*a), self.val(*b));
        self.push(y, Op::Mul { a: *a, b: *b })
    }

    fn scale(&mut self, x: &Var, c: f64) -> Var {
        let y = ops::scale(self.val(*x), c);
        self.push(y, Op::Scale { x: *x, c })
    }

    fn sum_all(&mut self, x: &Var) -> Var {
        let y = ops::sum_all(self.val(*x));
        self.push(y, Op::SumAll { x: *x })
    }

    fn mse(&mut self, a: &Var, b: &Var) -> Var {
        let y = ops::mse(self.val(*a), self.val(*b));
        self.push(y, Op::Mse { a: *a, b: *b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn linear_loss_gradient_is_the_fixed_factor() {
        // loss = sum(w .* x) with x fixed => dloss/dw = x.
        let mut set = ParamSet::new();
        let w = set.add("w", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]));
        let mut tape = Tape::new(&set);
        let wv = tape.param(w);
        let xv = tape.leaf(Tensor::new(vec![3], vec![3.0, 4.0, 5.0]));
        let prod = tape.mul(&wv, &xv);
        let loss = tape.sum_all(&prod);
        tape.backward(loss);
        let grads = tape.param_grads();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    #[should_panic(expected = "loss must be scalar")]
    fn non_scalar_loss_rejected() {
        let set = ParamSet::new();
        let mut tape = Tape::new(&set);
        let x = tape.leaf(Tensor::zeros(vec![2, 2]));
        tape.backward(x);
    }

    #[test]
    fn repeated_backward_after_reset_is_bit_identical() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mut set = ParamSet::new();
        let w = set.add("w", Tensor::from_fn(vec![4, 4], |_| rng.gen_range(-1.0..1.0)));
        let mut tape = Tape::new(&set);
        let wv = tape.param(w);
        let xv = tape.leaf(Tensor::from_fn(vec![4, 4], |_| rng.gen_range(-1.0..1.0)));
        let h = tape.matmul(&wv, &xv);
        let r = tape.relu(&h);
        let s = tape.softmax_rows(&r);
        let loss = tape.sum_all(&s);

        tape.backward(loss);
        let g1 = tape.param_grads().get(w).unwrap().clone();
        tape.zero_grads();
        tape.backward(loss);
        let g2 = tape.param_grads().get(w).unwrap().clone();
        assert_eq!(g1.data(), g2.data(), "gradients must be bit-identical");
    }

    #[test]
    fn fanout_accumulates_gradients() {
        // loss = sum(x + x) => dloss/dx = 2 everywhere.
        let mut set = ParamSet::new();
        let w = set.add("w", Tensor::full(vec![2], 1.0));
        let mut tape = Tape::new(&set);
        let wv = tape.param(w);
        let s = tape.add(&wv, &wv);
        let loss = tape.sum_all(&s);
        tape.backward(loss);
        assert_eq!(tape.param_grads().get(w).unwrap().data(), &[2.0, 2.0]);
    }
}
