//! Spatial resampling: 2x2 max pooling and 2x bilinear upsampling.

use crate::tensor::Tensor;

/// 2x2 max pooling with stride 2. Requires even spatial dims.
pub fn maxpool2d(x: &Tensor) -> Tensor {
    assert_eq!(x.shape().len(), 3, "maxpool2d: input must be [C,H,W], got {:?}", x.shape());
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    assert!(h % 2 == 0 && w % 2 == 0, "maxpool2d: H and W must be even, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + oy * 2) * w + ox * 2;
                let mut best = src[base];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let v = src[base + dy * w + dx];
                    if v > best {
                        best = v;
                    }
                }
                out[(ch * oh + oy) * ow + ox] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Routes each output gradient to the first maximal cell of its window
/// (row-major scan order breaks ties).
pub fn maxpool2d_backward(x: &Tensor, dy: &[f64]) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = (ch * h + oy * 2) * w + ox * 2;
                let mut best = src[base];
                let mut arg = base;
                for (dy_, dx_) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = base + dy_ * w + dx_;
                    if src[idx] > best {
                        best = src[idx];
                        arg = idx;
                    }
                }
                dx[arg] += dy[(ch * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}

/// Source coordinate and mix weight for one output index under
/// align-corners-false 2x upsampling.
fn src_mix(o: usize, src_len: usize) -> (usize, usize, f64) {
    let s = (o as f64 + 0.5) / 2.0 - 0.5;
    let s = s.max(0.0);
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Doubles both spatial dimensions with align-corners-false bilinear
/// interpolation. Computed in difference form (`a + f*(b-a)`), which keeps
/// constant inputs exactly constant.
pub fn bilinear_upsample2x(x: &Tensor) -> Tensor {
    assert_eq!(x.shape().len(), 3, "upsample: input must be [C,H,W], got {:?}", x.shape());
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let src = x.data();
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, fy) = src_mix(oy, h);
            for ox in 0..ow {
                let (x0, x1, fx) = src_mix(ox, w);
                let top = plane[y0 * w + x0] + fx * (plane[y0 * w + x1] - plane[y0 * w + x0]);
                let bot = plane[y1 * w + x0] + fx * (plane[y1 * w + x1] - plane[y1 * w + x0]);
                out[(ch * oh + oy) * ow + ox] = top + fy * (bot - top);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

pub fn bilinear_upsample2x_backward(x_shape: &[usize], dy: &[f64]) -> Tensor {
    let (c, h, w) = (x_shape[0], x_shape[1], x_shape[2]);
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, fy) = src_mix(oy, h);
            for ox in 0..ow {
                let (x0, x1, fx) = src_mix(ox, w);
                let g = dy[(ch * oh + oy) * ow + ox];
                plane[y0 * w + x0] += (1.0 - fy) * (1.0 - fx) * g;
                plane[y0 * w + x1] += (1.0 - fy) * fx * g;
                plane[y1 * w + x0] += fy * (1.0 - fx) * g;
                plane[y1 * w + x1] += fy * fx * g;
            }
        }
    }
    Tensor::new(x_shape.to_vec(), dx)
}
