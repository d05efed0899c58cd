//! Matrix kernels: the three matmul layouts the graph needs, row softmax,
//! and 2-D transpose.
//!
//! All kernels are deterministic: parallel work is split over disjoint output
//! rows and every per-element summation order is fixed, so repeated runs give
//! bit-identical results regardless of thread scheduling.

use crate::tensor::Tensor;
use rayon::prelude::*;

/// Above this many multiply-adds a kernel fans out across threads.
const PAR_FLOP_THRESHOLD: usize = 1 << 21;

/// Column-block width; keeps the active `b` panel inside L2.
const BLOCK_J: usize = 1024;
/// Inner-dimension block depth.
const BLOCK_P: usize = 256;

fn mm_rows(c_rows: &mut [f64], a_rows: &[f64], b: &[f64], k: usize, n: usize) {
    let rows = c_rows.len() / n;
    let mut jb = 0;
    while jb < n {
        let je = (jb + BLOCK_J).min(n);
        let mut pb = 0;
        while pb < k {
            let pe = (pb + BLOCK_P).min(k);
            for i in 0..rows {
                let arow = &a_rows[i * k..(i + 1) * k];
                let crow = &mut c_rows[i * n + jb..i * n + je];
                for p in pb..pe {
                    let aip = arow[p];
                    if aip == 0.0 {
                        continue;
                    }
                    let brow = &b[p * n + jb..p * n + je];
                    for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                        *cv += aip * bv;
                    }
                }
            }
            pb = pe;
        }
        jb = je;
    }
}

/// `a[m,k] * b[k,n] -> c[m,n]`, all row-major.
pub fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k, "mm: lhs buffer size mismatch");
    assert_eq!(b.len(), k * n, "mm: rhs buffer size mismatch");
    let mut c = vec![0.0; m * n];
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        let chunk_rows = m.div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
        c.par_chunks_mut(chunk_rows * n)
            .zip(a.par_chunks(chunk_rows * k))
            .for_each(|(c_rows, a_rows)| mm_rows(c_rows, a_rows, b, k, n));
    } else {
        mm_rows(&mut c, a, b, k, n);
    }
    c
}

const LANES: usize = 8;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    // Fixed 8-lane accumulation tree: vectorizable and deterministic.
    let mut acc = [0.0f64; LANES];
    let chunks = x.len() / LANES;
    for c in 0..chunks {
        let xb = &x[c * LANES..(c + 1) * LANES];
        let yb = &y[c * LANES..(c + 1) * LANES];
        for l in 0..LANES {
            acc[l] += xb[l] * yb[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * LANES..x.len() {
        tail += x[i] * y[i];
    }
    let half: Vec<f64> = (0..LANES / 2).map(|l| acc[l] + acc[l + LANES / 2]).collect();
    half.iter().sum::<f64>() + tail
}

/// `a[m,k] * b[n,k]^T -> c[m,n]`: row-by-row dot products.
pub fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k, "mm_nt: lhs buffer size mismatch");
    assert_eq!(b.len(), n * k, "mm_nt: rhs buffer size mismatch");
    let mut c = vec![0.0; m * n];
    let body = |(i, crow): (usize, &mut [f64])| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cv) in crow.iter_mut().enumerate() {
            *cv = dot(arow, &b[j * k..(j + 1) * k]);
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        c.chunks_mut(n).enumerate().for_each(body);
    }
    c
}

/// `a[k,m]^T * b[k,n] -> c[m,n]`: rank-1 style updates, vectorized over `n`.
pub fn mm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), k * m, "mm_tn: lhs buffer size mismatch");
    assert_eq!(b.len(), k * n, "mm_tn: rhs buffer size mismatch");
    let mut c = vec![0.0; m * n];
    let body = |(i, crow): (usize, &mut [f64])| {
        for p in 0..k {
            let w = a[p * m + i];
            if w == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += w * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(body);
    } else {
        c.chunks_mut(n).enumerate().for_each(body);
    }
    c
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape().len(), 2, "matmul: lhs must be 2-D, got {:?}", a.shape());
    assert_eq!(b.shape().len(), 2, "matmul: rhs must be 2-D, got {:?}", b.shape());
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let (q2, r) = (b.shape()[0], b.shape()[1]);
    assert_eq!(
        q, q2,
        "matmul: inner dimensions disagree ({p}x{q} vs {q2}x{r})"
    );
    Tensor::new(vec![p, r], mm(a.data(), b.data(), p, q, r))
}

/// d(a*b) w.r.t. both operands.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dy: &[f64]) -> (Tensor, Tensor) {
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let r = b.shape()[1];
    let da = mm_nt(dy, b.data(), p, r, q);
    let db = mm_tn(a.data(), dy, q, p, r);
    (Tensor::new(vec![p, q], da), Tensor::new(vec![q, r], db))
}

pub fn transpose2d(a: &Tensor) -> Tensor {
    assert_eq!(a.shape().len(), 2, "transpose: needs a 2-D tensor");
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let src = a.data();
    let mut out = vec![0.0; p * q];
    for i in 0..p {
        for j in 0..q {
            out[j * p + i] = src[i * q + j];
        }
    }
    Tensor::new(vec![q, p], out)
}

/// Row-wise softmax with max subtraction.
///
/// Panics on non-finite input (NaN rows have no meaningful distribution).
pub fn softmax_rows(x: &Tensor) -> Tensor {
    assert_eq!(x.shape().len(), 2, "softmax_rows: needs a 2-D tensor");
    let (p, q) = (x.shape()[0], x.shape()[1]);
    assert!(q > 0, "softmax_rows: empty rows");
    let src = x.data();
    let mut out = vec![0.0; p * q];
    for i in 0..p {
        let row = &src[i * q..(i + 1) * q];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            assert!(v.is_finite(), "softmax_rows: non-finite input {v}");
            max = max.max(v);
        }
        let orow = &mut out[i * q..(i + 1) * q];
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(row.iter()) {
            *o = (v - max).exp();
            sum += *o;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
    Tensor::new(vec![p, q], out)
}

/// dx for `y = softmax_rows(x)`: `y .* (dy - rowsum(dy .* y))`.
pub fn softmax_rows_backward(y: &Tensor, dy: &[f64]) -> Tensor {
    let (p, q) = (y.shape()[0], y.shape()[1]);
    let yv = y.data();
    let mut dx = vec![0.0; p * q];
    for i in 0..p {
        let yr = &yv[i * q..(i + 1) * q];
        let dyr = &dy[i * q..(i + 1) * q];
        let s: f64 = yr.iter().zip(dyr.iter()).map(|(a, b)| a * b).sum();
        for j in 0..q {
            dx[i * q + j] = yr[j] * (dyr[j] - s);
        }
    }
    Tensor::new(vec![p, q], dx)
}
