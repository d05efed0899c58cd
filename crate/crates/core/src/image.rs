//! 8-bit RGB images: binary PPM/PGM I/O, channel normalization, and
//! bilinear resizing with annotation rescaling.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::density::DotAnnotations;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Channel statistics used for input normalization (the standard ImageNet
/// values, recorded here as configuration constants).
pub const CHANNEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const CHANNEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    /// `3 * h * w` bytes, row-major, RGB interleaved.
    pub rgb: Vec<u8>,
}

impl Image {
    pub fn new(h: usize, w: usize, rgb: Vec<u8>) -> Self {
        assert_eq!(rgb.len(), 3 * h * w, "image buffer size mismatch");
        Image { h, w, rgb }
    }

    pub fn filled(h: usize, w: usize, value: u8) -> Self {
        Image::new(h, w, vec![value; 3 * h * w])
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, px: [u8; 3]) {
        let i = (y * self.w + x) * 3;
        self.rgb[i..i + 3].copy_from_slice(&px);
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Image {
        assert!(y0 + h <= self.h && x0 + w <= self.w, "crop outside image");
        let mut rgb = Vec::with_capacity(3 * h * w);
        for y in y0..y0 + h {
            let s = (y * self.w + x0) * 3;
            rgb.extend_from_slice(&self.rgb[s..s + 3 * w]);
        }
        Image::new(h, w, rgb)
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

/// Pulls the next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Reads a binary PPM (P6, RGB) or PGM (P5, grayscale expanded to RGB).
/// Only 8-bit (maxval 255) images are accepted.
pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = read_all(path)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos).ok_or_else(|| Error::parse(path, "missing magic"))?;
    if magic != "P6" && magic != "P5" {
        return Err(Error::parse(path, format!("unsupported format '{magic}' (want P6 or P5)")));
    }
    let mut dim = |name: &str| -> Result<usize> {
        next_token(&bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad {name}")))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let maxval = dim("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(path, format!("maxval {maxval} unsupported (want 255)")));
    }
    if w == 0 || h == 0 {
        return Err(Error::parse(path, "zero-sized image"));
    }
    pos += 1; // single whitespace byte after maxval
    let channels = if magic == "P6" { 3 } else { 1 };
    let need = h * w * channels;
    if bytes.len() < pos + need {
        return Err(Error::parse(path, format!("truncated payload: need {need} bytes")));
    }
    let payload = &bytes[pos..pos + need];
    let rgb = if channels == 3 {
        payload.to_vec()
    } else {
        payload.iter().flat_map(|&v| [v, v, v]).collect()
    };
    Ok(Image::new(h, w, rgb))
}

pub fn write_ppm(image: &Image, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(format!("P6\n{} {}\n255\n", image.w, image.h).as_bytes())
        .and_then(|_| out.write_all(&image.rgb))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes an 8-bit binary PGM from a grayscale byte plane.
pub fn write_pgm(gray: &[u8], h: usize, w: usize, path: &Path) -> Result<()> {
    assert_eq!(gray.len(), h * w, "pgm plane size mismatch");
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(format!("P5\n{w} {h}\n255\n").as_bytes())
        .and_then(|_| out.write_all(gray))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// `(v/255 - mean_c) / std_c` per channel, to a `[3,H,W]` tensor.
pub fn normalize(image: &Image) -> Tensor {
    let (h, w) = (image.h, image.w);
    let mut data = vec![0.0; 3 * h * w];
    for c in 0..3 {
        let (mean, std) = (CHANNEL_MEAN[c], CHANNEL_STD[c]);
        for i in 0..h * w {
            data[c * h * w + i] = (image.rgb[i * 3 + c] as f64 / 255.0 - mean) / std;
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Inverse of [`normalize`] up to 8-bit quantization.
pub fn denormalize(t: &Tensor) -> Image {
    assert_eq!(t.shape().len(), 3, "denormalize: want [3,H,W]");
    assert_eq!(t.shape()[0], 3, "denormalize: want 3 channels");
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let mut rgb = vec![0u8; 3 * h * w];
    for c in 0..3 {
        for i in 0..h * w {
            let v = (t.data()[c * h * w + i] * CHANNEL_STD[c] + CHANNEL_MEAN[c]) * 255.0;
            rgb[i * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(h, w, rgb)
}

/// Bilinear resample to `nh x nw` (align-corners-false sampling).
pub fn resize_bilinear(image: &Image, nh: usize, nw: usize) -> Image {
    assert!(nh > 0 && nw > 0, "resize to zero size");
    let (h, w) = (image.h, image.w);
    let sy = h as f64 / nh as f64;
    let sx = w as f64 / nw as f64;
    let mut rgb = vec![0u8; 3 * nh * nw];
    for oy in 0..nh {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..nw {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            for c in 0..3 {
                let p = |y: usize, x: usize| image.rgb[(y * w + x) * 3 + c] as f64;
                let top = p(y0, x0) + tx * (p(y0, x1) - p(y0, x0));
                let bot = p(y1, x0) + tx * (p(y1, x1) - p(y1, x0));
                let v = top + ty * (bot - top);
                rgb[(oy * nw + ox) * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(nh, nw, rgb)
}

/// Rescales images whose larger dimension exceeds `max_dim`, preserving
/// aspect ratio; dot coordinates are rescaled by the same factors and the
/// dot count is unchanged.
pub fn resize_cap(image: &Image, dots: &DotAnnotations, max_dim: usize) -> (Image, DotAnnotations) {
    let largest = image.h.max(image.w);
    if largest <= max_dim {
        return (image.clone(), dots.clone());
    }
    let s = max_dim as f64 / largest as f64;
    let nh = ((image.h as f64 * s).round() as usize).max(1);
    let nw = ((image.w as f64 * s).round() as usize).max(1);
    let resized = resize_bilinear(image, nh, nw);
    let fx = nw as f64 / image.w as f64;
    let fy = nh as f64 / image.h as f64;
    let points = dots
        .points
        .iter()
        .map(|&(x, y)| (x * fx, y * fy))
        .collect();
    (
        resized,
        DotAnnotations {
            image_id: dots.image_id.clone(),
            points,
        },
    )
}
