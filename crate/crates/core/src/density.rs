//! Dot annotations and density maps.
//!
//! Coordinates are continuous: a dot lives in `[0, W) x [0, H)` and pixel
//! `(row, col)` covers the unit square with center `(col + 0.5, row + 0.5)`.
//! Ground-truth maps are sums of unit-mass Gaussians evaluated at pixel
//! centers, truncated at the image boundary, so interior dots contribute
//! mass 1 and a dot at the exact image corner contributes about 0.25.

use std::f64::consts::PI;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Head positions for one image, `(x, y)` in pixels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DotAnnotations {
    pub image_id: String,
    pub points: Vec<(f64, f64)>,
}

impl DotAnnotations {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Verifies every dot lies inside `[0, w) x [0, h)`.
    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        for &(x, y) in &self.points {
            if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
                return Err(Error::Contract(format!(
                    "dot ({x}, {y}) outside {w}x{h} image '{}'",
                    self.image_id
                )));
            }
        }
        Ok(())
    }

    /// Number of dots inside an axis-aligned crop window.
    pub fn count_in(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> usize {
        self.points
            .iter()
            .filter(|&&(x, y)| x >= x0 && x < x1 && y >= y0 && y < y1)
            .count()
    }
}

/// Per-pixel crowd density over `h x w`; the sum of entries estimates the
/// person count.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(h: usize, w: usize) -> Self {
        DensityMap {
            h,
            w,
            values: vec![0.0; h * w],
        }
    }

    /// Crowd count: sum across all pixels.
    pub fn count(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.w + x]
    }

    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> DensityMap {
        assert!(y0 + h <= self.h && x0 + w <= self.w, "crop outside map");
        let mut values = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            values.extend_from_slice(&self.values[y * self.w + x0..y * self.w + x0 + w]);
        }
        DensityMap { h, w, values }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.h, self.w], self.values.clone())
    }

    pub fn from_tensor(t: &Tensor) -> DensityMap {
        assert!(
            t.shape().len() == 3 && t.shape()[0] == 1,
            "density tensor must be [1,H,W], got {:?}",
            t.shape()
        );
        DensityMap {
            h: t.shape()[1],
            w: t.shape()[2],
            values: t.data().to_vec(),
        }
    }

    /// Writes the `DMAP v1` format: a text header line `DMAP v1 H W`
    /// followed by row-major little-endian f32 values.
    pub fn save_dmap(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let write = |out: &mut BufWriter<std::fs::File>, bytes: &[u8]| {
            out.write_all(bytes).map_err(|e| Error::io(path, e))
        };
        write(&mut out, format!("DMAP v1 {} {}\n", self.h, self.w).as_bytes())?;
        for &v in &self.values {
            write(&mut out, &(v as f32).to_le_bytes())?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_dmap(path: &Path) -> Result<DensityMap> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, "missing header line"))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| Error::parse(path, "header is not UTF-8"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "DMAP" || fields[1] != "v1" {
            return Err(Error::parse(path, format!("bad header '{header}'")));
        }
        let h: usize = fields[2].parse().map_err(|_| Error::parse(path, "bad height"))?;
        let w: usize = fields[3].parse().map_err(|_| Error::parse(path, "bad width"))?;
        let payload = &bytes[nl + 1..];
        if payload.len() != h * w * 4 {
            return Err(Error::parse(
                path,
                format!("expected {} payload bytes, got {}", h * w * 4, payload.len()),
            ));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(DensityMap { h, w, values })
    }

    /// Max-normalized 8-bit grayscale heatmap for visualization.
    pub fn to_heatmap_bytes(&self) -> Vec<u8> {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return vec![0; self.h * self.w];
        }
        self.values
            .iter()
            .map(|&v| ((v / max * 255.0).round().clamp(0.0, 255.0)) as u8)
            .collect()
    }
}

/// Truncation radius for rendered Gaussians, in units of sigma. The mass
/// outside a 4-sigma box is below 2e-4, well inside the 1e-3 budget.
const TRUNCATION_SIGMAS: f64 = 4.0;

/// Renders the ground-truth density map: one unit-mass Gaussian of width
/// `sigma` per dot, evaluated at pixel centers and truncated at the image
/// boundary.
pub fn render_density(dots: &DotAnnotations, h: usize, w: usize, sigma: f64) -> DensityMap {
    assert!(sigma > 0.0, "render_density: sigma must be positive, got {sigma}");
    dots.validate(h, w)
        .unwrap_or_else(|e| panic!("render_density: {e}"));
    let mut map = DensityMap::zeros(h, w);
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let r = TRUNCATION_SIGMAS * sigma;
    for &(cx, cy) in &dots.points {
        // Pixel index range whose centers fall inside the truncation box.
        let y_lo = ((cy - r - 0.5).ceil().max(0.0)) as usize;
        let y_hi = ((cy + r - 0.5).floor()).min(h as f64 - 1.0) as usize;
        let x_lo = ((cx - r - 0.5).ceil().max(0.0)) as usize;
        let x_hi = ((cx + r - 0.5).floor()).min(w as f64 - 1.0) as usize;
        for py in y_lo..=y_hi {
            let dy = py as f64 + 0.5 - cy;
            for px in x_lo..=x_hi {
                let dx = px as f64 + 0.5 - cx;
                map.values[py * w + px] += norm * (-(dx * dx + dy * dy) * inv2s2).exp();
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dots(points: Vec<(f64, f64)>) -> DotAnnotations {
        DotAnnotations {
            image_id: "test".into(),
            points,
        }
    }

    #[test]
    fn empty_dots_render_zero_map() {
        let map = render_density(&dots(vec![]), 32, 32, 4.0);
        assert_eq!(map.count(), 0.0);
    }

    #[test]
    fn centered_dot_has_unit_mass() {
        let map = render_density(&dots(vec![(32.0, 32.0)]), 64, 64, 4.0);
        assert!((map.count() - 1.0).abs() < 1e-3, "count {}", map.count());
    }

    #[test]
    fn corner_dot_keeps_one_quadrant() {
        let interior = render_density(&dots(vec![(32.0, 32.0)]), 64, 64, 4.0).count();
        let corner = render_density(&dots(vec![(0.0, 0.0)]), 64, 64, 4.0).count();
        let ratio = corner / interior;
        assert!((ratio - 0.25).abs() < 0.005, "ratio {ratio}");
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn out_of_bounds_dot_rejected() {
        let _ = render_density(&dots(vec![(64.0, 10.0)]), 64, 64, 4.0);
    }

    #[test]
    fn interior_dots_conserve_count() {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| (20.0 + 5.0 * i as f64, 30.0 + 3.0 * i as f64))
            .collect();
        let k = pts.len() as f64;
        let map = render_density(&dots(pts), 64, 64, 4.0);
        assert!((map.count() - k).abs() < 1e-3 * k, "count {}", map.count());
    }

    #[test]
    fn dmap_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.dmap");
        let map = render_density(&dots(vec![(10.0, 12.5), (20.0, 8.0)]), 32, 40, 3.0);
        map.save_dmap(&path).unwrap();
        let loaded = DensityMap::load_dmap(&path).unwrap();
        assert_eq!(loaded.h, 32);
        assert_eq!(loaded.w, 40);
        // f32 storage quantizes; values must agree to f32 precision.
        for (a, b) in map.values.iter().zip(loaded.values.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((map.count() - loaded.count()).abs() < 1e-4);
    }

    #[test]
    fn crop_preserves_values() {
        let map = render_density(&dots(vec![(16.0, 16.0)]), 32, 32, 2.0);
        let crop = map.crop(8, 8, 16, 16);
        assert_eq!(crop.at(8, 8), map.at(16, 16));
        assert!((crop.count() - map.count()).abs() < 1e-6); // 4-sigma box inside crop
    }

    #[test]
    fn count_in_window() {
        let d = dots(vec![(1.0, 1.0), (5.0, 5.0), (9.0, 9.0)]);
        assert_eq!(d.count_in(0.0, 0.0, 6.0, 6.0), 2);
        assert_eq!(d.count_in(5.0, 5.0, 10.0, 10.0), 2);
    }
}
