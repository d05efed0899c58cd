//! 2-D and 1-D convolution via im2col + matmul.
//!
//! The column buffers are rebuilt during the backward pass instead of being
//! cached on the graph; that keeps per-node memory at one activation map.

use super::matrix::{mm, mm_nt, mm_tn};
use crate::tensor::Tensor;

pub struct Conv2dGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub struct Conv1dGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

fn conv2d_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    let span = input + 2 * pad;
    assert!(span >= k, "conv2d: kernel {k} larger than padded input {span}");
    assert!(
        (span - k) % stride == 0,
        "conv2d: non-integer output size for input {input}, kernel {k}, stride {stride}, pad {pad}"
    );
    (span - k) / stride + 1
}

fn check_conv2d_shapes(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> (usize, usize, usize, usize, usize, usize, usize) {
    assert_eq!(x.shape().len(), 3, "conv2d: input must be [C,H,W], got {:?}", x.shape());
    assert_eq!(w.shape().len(), 4, "conv2d: weight must be [O,C,k,k], got {:?}", w.shape());
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, wc, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    assert_eq!(kh, kw, "conv2d: kernel must be square, got {kh}x{kw}");
    assert!(kh % 2 == 1, "conv2d: kernel size must be odd, got {kh}");
    assert!(stride >= 1, "conv2d: stride must be >= 1");
    assert_eq!(wc, c_in, "conv2d: weight expects {wc} input channels, input has {c_in}");
    assert_eq!(b.shape(), &[c_out], "conv2d: bias must be [{c_out}], got {:?}", b.shape());
    let oh = conv2d_out_dim(h, kh, stride, pad);
    let ow = conv2d_out_dim(wd, kw, stride, pad);
    (c_in, h, wd, c_out, kh, oh, ow)
}

/// Unrolls `x[C,H,W]` into `cols[C*k*k, OH*OW]` for the given geometry.
fn im2col(x: &[f64], c_in: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut cols = vec![0.0; c_in * k * k * oh * ow];
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    let dst_row = row + oy * ow;
                    if stride == 1 {
                        // Valid ox range where ix = ox + kx - pad stays in [0, w).
                        let ox_lo = pad.saturating_sub(kx);
                        let ox_hi = (w + pad - kx).min(ow);
                        if ox_lo < ox_hi {
                            let ix_lo = ox_lo + kx - pad;
                            cols[dst_row + ox_lo..dst_row + ox_hi]
                                .copy_from_slice(&x[src_row + ix_lo..src_row + ix_lo + (ox_hi - ox_lo)]);
                        }
                    } else {
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                cols[dst_row + ox] = x[src_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the input.
fn col2im_add(dcols: &[f64], c_in: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut dx = vec![0.0; c_in * h * w];
    for c in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (c * h + iy as usize) * w;
                    let src_row = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[dst_row + ix as usize] += dcols[src_row + ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `conv2d(x[C,H,W], w[O,C,k,k], b[O])` with zero padding.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (c_in, h, wd, c_out, k, oh, ow) = check_conv2d_shapes(x, w, b, stride, pad);
    let cols = im2col(x.data(), c_in, h, wd, k, stride, pad, oh, ow);
    let mut y = mm(w.data(), &cols, c_out, c_in * k * k, oh * ow);
    for o in 0..c_out {
        let bias = b.data()[o];
        if bias != 0.0 {
            for v in &mut y[o * oh * ow..(o + 1) * oh * ow] {
                *v += bias;
            }
        }
    }
    Tensor::new(vec![c_out, oh, ow], y)
}

pub fn conv2d_backward(x: &Tensor, w: &Tensor, stride: usize, pad: usize, dy: &[f64]) -> Conv2dGrads {
    let (c_in, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let oh = conv2d_out_dim(h, k, stride, pad);
    let ow = conv2d_out_dim(wd, k, stride, pad);
    let ckk = c_in * k * k;

    let mut db = vec![0.0; c_out];
    for o in 0..c_out {
        db[o] = dy[o * oh * ow..(o + 1) * oh * ow].iter().sum();
    }

    let cols = im2col(x.data(), c_in, h, wd, k, stride, pad, oh, ow);
    let dw = mm_nt(dy, &cols, c_out, oh * ow, ckk);
    let dcols = mm_tn(w.data(), dy, ckk, c_out, oh * ow);
    let dx = col2im_add(&dcols, c_in, h, wd, k, stride, pad, oh, ow);

    Conv2dGrads {
        dx: Tensor::new(x.shape().to_vec(), dx),
        dw: Tensor::new(w.shape().to_vec(), dw),
        db: Tensor::new(vec![c_out], db),
    }
}

fn check_conv1d_shapes(x: &Tensor, w: &Tensor, b: &Tensor) -> (usize, usize, usize, usize) {
    assert_eq!(x.shape().len(), 2, "conv1d: input must be [n,d_in], got {:?}", x.shape());
    assert_eq!(w.shape().len(), 3, "conv1d: weight must be [d_out,d_in,k], got {:?}", w.shape());
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let (d_out, wd_in, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    assert!(k % 2 == 1, "conv1d: kernel size must be odd, got {k}");
    assert_eq!(wd_in, d_in, "conv1d: weight expects {wd_in} input dims, input has {d_in}");
    assert_eq!(b.shape(), &[d_out], "conv1d: bias must be [{d_out}], got {:?}", b.shape());
    (n, d_in, d_out, k)
}

/// Builds `cols[n, k*d_in]` where row `i` is the window `x[i-m..=i+m]`
/// flattened in sequence order, with zero rows outside `[0, n)`.
fn seq2col(x: &[f64], n: usize, d_in: usize, k: usize) -> Vec<f64> {
    let m = (k - 1) / 2;
    let mut cols = vec![0.0; n * k * d_in];
    for i in 0..n {
        for t in 0..k {
            let j = i as isize + t as isize - m as isize;
            if j < 0 || j >= n as isize {
                continue;
            }
            let src = j as usize * d_in;
            let dst = i * k * d_in + t * d_in;
            cols[dst..dst + d_in].copy_from_slice(&x[src..src + d_in]);
        }
    }
    cols
}

/// Repacks `w[d_out, d_in, k]` as `wc[d_out, k*d_in]` matching [`seq2col`] order.
fn pack_conv1d_weight(w: &[f64], d_out: usize, d_in: usize, k: usize) -> Vec<f64> {
    let mut wc = vec![0.0; d_out * k * d_in];
    for o in 0..d_out {
        for c in 0..d_in {
            for t in 0..k {
                wc[o * k * d_in + t * d_in + c] = w[(o * d_in + c) * k + t];
            }
        }
    }
    wc
}

/// Length-preserving 1-D convolution over a sequence of row vectors.
///
/// Output row `i` mixes rows `i-(k-1)/2 ..= i+(k-1)/2`, with zero vectors
/// standing in for positions outside the sequence.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (n, d_in, d_out, k) = check_conv1d_shapes(x, w, b);
    let cols = seq2col(x.data(), n, d_in, k);
    let wc = pack_conv1d_weight(w.data(), d_out, d_in, k);
    let mut y = mm_nt(&cols, &wc, n, k * d_in, d_out);
    for i in 0..n {
        for o in 0..d_out {
            y[i * d_out + o] += b.data()[o];
        }
    }
    Tensor::new(vec![n, d_out], y)
}

pub fn conv1d_backward(x: &Tensor, w: &Tensor, dy: &[f64]) -> Conv1dGrads {
    let (n, d_in) = (x.shape()[0], x.shape()[1]);
    let (d_out, k) = (w.shape()[0], w.shape()[2]);
    let m = (k - 1) / 2;
    let kd = k * d_in;

    let mut db = vec![0.0; d_out];
    for i in 0..n {
        for o in 0..d_out {
            db[o] += dy[i * d_out + o];
        }
    }

    let cols = seq2col(x.data(), n, d_in, k);
    let dwc = mm_tn(dy, &cols, d_out, n, kd);
    let mut dw = vec![0.0; d_out * d_in * k];
    for o in 0..d_out {
        for c in 0..d_in {
            for t in 0..k {
                dw[(o * d_in + c) * k + t] = dwc[o * kd + t * d_in + c];
            }
        }
    }

    let wc = pack_conv1d_weight(w.data(), d_out, d_in, k);
    let dcols = mm(dy, &wc, n, d_out, kd);
    let mut dx = vec![0.0; n * d_in];
    for i in 0..n {
        for t in 0..k {
            let j = i as isize + t as isize - m as isize;
            if j < 0 || j >= n as isize {
                continue;
            }
            let dst = j as usize * d_in;
            let src = i * kd + t * d_in;
            for c in 0..d_in {
                dx[dst + c] += dcols[src + c];
            }
        }
    }

    Conv1dGrads {
        dx: Tensor::new(vec![n, d_in], dx),
        dw: Tensor::new(w.shape().to_vec(), dw),
        db: Tensor::new(vec![d_out], db),
    }
}
