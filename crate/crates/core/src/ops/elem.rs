//! Elementwise primitives and axis concatenation.

use crate::tensor::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

/// dx = dy where the forward output was positive, else 0.
pub fn relu_backward(y: &Tensor, dy: &[f64]) -> Tensor {
    let dx = y
        .data()
        .iter()
        .zip(dy.iter())
        .map(|(&yv, &g)| if yv > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(y.shape().to_vec(), dx)
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "add: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect(),
    )
}

pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "mul: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data().iter()).map(|(x, y)| x * y).collect(),
    )
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| c * v).collect())
}

/// Sum of all elements as a one-element tensor.
pub fn sum_all(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data().iter().sum())
}

/// Mean squared per-element error as a one-element tensor.
pub fn mse(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "mse: shape mismatch {:?} vs {:?}", a.shape(), b.shape());
    let n = a.numel() as f64;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Tensor::scalar(s / n)
}

/// (da, db) for `mse(a, b)` given upstream scalar gradient `g`.
pub fn mse_backward(a: &Tensor, b: &Tensor, g: f64) -> (Tensor, Tensor) {
    let n = a.numel() as f64;
    let da: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| 2.0 * (x - y) / n * g)
        .collect();
    let db: Vec<f64> = da.iter().map(|v| -v).collect();
    (Tensor::new(a.shape().to_vec(), da), Tensor::new(b.shape().to_vec(), db))
}

/// Concatenates tensors along `axis`. All other dims must match.
pub fn concat(axis: usize, parts: &[&Tensor]) -> Tensor {
    assert!(!parts.is_empty(), "concat: no inputs");
    let rank = parts[0].shape().len();
    assert!(axis < rank, "concat: axis {axis} out of range for rank {rank}");
    for p in parts {
        assert_eq!(p.shape().len(), rank, "concat: rank mismatch");
        for d in 0..rank {
            if d != axis {
                assert_eq!(
                    p.shape()[d],
                    parts[0].shape()[d],
                    "concat: dim {d} mismatch ({:?} vs {:?})",
                    p.shape(),
                    parts[0].shape()
                );
            }
        }
    }
    let mut out_shape = parts[0].shape().to_vec();
    out_shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();

    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let out_axis = out_shape[axis];
    let mut out = vec![0.0; outer * out_axis * inner];
    let mut offset = 0;
    for p in parts {
        let p_axis = p.shape()[axis];
        let src = p.data();
        for o in 0..outer {
            let dst = (o * out_axis + offset) * inner;
            let s = o * p_axis * inner;
            out[dst..dst + p_axis * inner].copy_from_slice(&src[s..s + p_axis * inner]);
        }
        offset += p_axis;
    }
    Tensor::new(out_shape, out)
}

/// Splits `dy` back into per-input gradients for [`concat`].
pub fn concat_backward(axis: usize, part_shapes: &[Vec<usize>], dy: &[f64]) -> Vec<Tensor> {
    let outer: usize = part_shapes[0][..axis].iter().product();
    let inner: usize = part_shapes[0][axis + 1..].iter().product();
    let out_axis: usize = part_shapes.iter().map(|s| s[axis]).sum();
    let mut grads = Vec::with_capacity(part_shapes.len());
    let mut offset = 0;
    for shape in part_shapes {
        let p_axis = shape[axis];
        let mut g = vec![0.0; outer * p_axis * inner];
        for o in 0..outer {
            let src = (o * out_axis + offset) * inner;
            let d = o * p_axis * inner;
            g[d..d + p_axis * inner].copy_from_slice(&dy[src..src + p_axis * inner]);
        }
        grads.push(Tensor::new(shape.clone(), g));
        offset += p_axis;
    }
    grads
}
