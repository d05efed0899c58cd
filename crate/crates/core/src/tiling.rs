//! Tiled inference for images larger than one crop.
//!
//! The image is partitioned into non-overlapping tiles; right/bottom
//! remainder tiles are mirror-padded up to a multiple of 8, predicted, and
//! trimmed back, so the stitched map has exactly the input resolution. The
//! returned count is the sum of per-tile counts in row-major tile order.

use crate::dataset::mirror_index;
use crate::density::DensityMap;
use crate::engine::{Engine, Infer};
use crate::image::{normalize, Image};
use crate::model::CtnModel;
use crate::tensor::Tensor;

/// Extracts `[3, h, w]` at offset `(y0, x0)` from a `[3, H, W]` tensor.
fn crop3(t: &Tensor, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
    let (c, th, tw) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    assert!(y0 + h <= th && x0 + w <= tw, "tile outside tensor");
    let src = t.data();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in y0..y0 + h {
            let s = (ch * th + y) * tw + x0;
            data.extend_from_slice(&src[s..s + w]);
        }
    }
    Tensor::new(vec![c, h, w], data)
}

/// Mirror-pads `[C, h, w]` on the right/bottom to `[C, nh, nw]`.
fn pad3_mirror(t: &Tensor, nh: usize, nw: usize) -> Tensor {
    let (c, h, w) = (t.shape()[0], t.shape()[1], t.shape()[2]);
    if h == nh && w == nw {
        return t.clone();
    }
    let src = t.data();
    let mut data = vec![0.0; c * nh * nw];
    for ch in 0..c {
        for y in 0..nh {
            let sy = mirror_index(y as isize, h);
            for x in 0..nw {
                let sx = mirror_index(x as isize, w);
                data[(ch * nh + y) * nw + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    Tensor::new(vec![c, nh, nw], data)
}

fn ceil8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

/// Predicts a density map for one already-normalized `[3, h, w]` tile,
/// padding to a multiple of 8 and trimming the result.
fn predict_tile(model: &CtnModel, tile: &Tensor) -> DensityMap {
    let (h, w) = (tile.shape()[1], tile.shape()[2]);
    let (ph, pw) = (ceil8(h.max(8)), ceil8(w.max(8)));
    let padded = pad3_mirror(tile, ph, pw);
    let mut eng = Infer::new(&model.params);
    let input = eng.leaf(padded);
    let pred = model.forward(&mut eng, &input);
    let full = DensityMap::from_tensor(&pred);
    if (ph, pw) == (h, w) {
        full
    } else {
        full.crop(0, 0, h, w)
    }
}

/// Tiled inference: non-overlapping `tile x tile` crops, stitched back to
/// the input resolution. Returns `(count, stitched map)` where the count is
/// the sum of per-tile counts.
///
/// `tile` must be positive and divisible by 8.
pub fn tile_predict(model: &CtnModel, image: &Image, tile: usize) -> (f64, DensityMap) {
    assert!(tile > 0 && tile % 8 == 0, "tile size {tile} must be a positive multiple of 8");
    let full = normalize(image);
    let (h, w) = (image.h, image.w);
    let mut stitched = DensityMap::zeros(h, w);
    let mut count = 0.0;
    let mut y0 = 0;
    while y0 < h {
        let th = tile.min(h - y0);
        let mut x0 = 0;
        while x0 < w {
            let tw = tile.min(w - x0);
            let tile_tensor = crop3(&full, y0, x0, th, tw);
            let pred = predict_tile(model, &tile_tensor);
            for y in 0..th {
                let dst = (y0 + y) * w + x0;
                stitched.values[dst..dst + tw].copy_from_slice(&pred.values[y * tw..(y + 1) * tw]);
            }
            count += pred.count();
            x0 += tile;
        }
        y0 += tile;
    }
    (count, stitched)
}
