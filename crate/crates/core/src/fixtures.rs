//! Synthetic crowd fixtures for smoke tests and demos: small images whose
//! "heads" are bright blobs at the annotated positions, so density structure
//! is learnable from pixels alone.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::Result;
use crate::image::{write_ppm, Image};

/// Renders a crowd-like image: dark textured background with one bright
/// Gaussian blob per dot.
pub fn synthetic_image(dots: &[(f64, f64)], h: usize, w: usize, rng: &mut ChaCha8Rng) -> Image {
    let mut lum = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            // Gentle diagonal gradient plus noise so the background is not flat.
            let g = 25.0 + 20.0 * (x + y) as f64 / (h + w) as f64;
            lum[y * w + x] = g + rng.gen_range(-4.0..4.0);
        }
    }
    let blob_sigma = 1.6f64;
    let inv = 1.0 / (2.0 * blob_sigma * blob_sigma);
    for &(cx, cy) in dots {
        let r = 4.0 * blob_sigma;
        let y_lo = ((cy - r).floor().max(0.0)) as usize;
        let y_hi = ((cy + r).ceil().min(h as f64 - 1.0)) as usize;
        let x_lo = ((cx - r).floor().max(0.0)) as usize;
        let x_hi = ((cx + r).ceil().min(w as f64 - 1.0)) as usize;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dy = y as f64 + 0.5 - cy;
                let dx = x as f64 + 0.5 - cx;
                lum[y * w + x] += 210.0 * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    let mut rgb = vec![0u8; 3 * h * w];
    for i in 0..h * w {
        let v = lum[i].clamp(0.0, 255.0);
        rgb[i * 3] = v as u8;
        rgb[i * 3 + 1] = (v * 0.92).clamp(0.0, 255.0) as u8;
        rgb[i * 3 + 2] = (v * 0.80).clamp(0.0, 255.0) as u8;
    }
    Image::new(h, w, rgb)
}

/// Samples `count` dot positions inside the margin with a minimum pairwise
/// separation.
pub fn scatter_dots(
    count: usize,
    h: usize,
    w: usize,
    margin: f64,
    min_sep: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut attempts = 0;
    while points.len() < count && attempts < 100_000 {
        attempts += 1;
        let x = rng.gen_range(margin..w as f64 - margin);
        let y = rng.gen_range(margin..h as f64 - margin);
        if points
            .iter()
            .all(|&(px, py)| (px - x).hypot(py - y) >= min_sep)
        {
            points.push((x, y));
        }
    }
    assert_eq!(points.len(), count, "could not place {count} dots");
    points
}

fn write_annotations(points: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut text = String::new();
    for &(x, y) in points {
        text.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, text).map_err(|e| crate::error::Error::io(path, e))
}

/// Writes the two-image synthetic fixture (64x64, about 20 dots each, very
/// different layouts) and returns the manifest path.
pub fn write_synthetic_pair(dir: &Path, seed: u64) -> Result<PathBuf> {
    let (h, w) = (64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Image a: dots clustered in the upper-left quadrant.
    let mut dots_a = scatter_dots(14, h / 2, w / 2, 5.0, 4.0, &mut rng);
    dots_a.extend(scatter_dots(4, h, w, 6.0, 6.0, &mut rng));
    // Image b: dots spread along the bottom and right.
    let mut dots_b: Vec<(f64, f64)> = scatter_dots(11, h / 2, w, 5.0, 4.5, &mut rng)
        .into_iter()
        .map(|(x, y)| (x, y + (h / 2) as f64 - 1.0))
        .collect();
    dots_b.extend(
        scatter_dots(11, h, w / 2, 5.0, 4.5, &mut rng)
            .into_iter()
            .map(|(x, y)| (x + (w / 2) as f64 - 1.0, y)),
    );

    let img_a = synthetic_image(&dots_a, h, w, &mut rng);
    let img_b = synthetic_image(&dots_b, h, w, &mut rng);

    write_ppm(&img_a, &dir.join("a.ppm"))?;
    write_annotations(&dots_a, &dir.join("a.txt"))?;
    write_ppm(&img_b, &dir.join("b.ppm"))?;
    write_annotations(&dots_b, &dir.join("b.txt"))?;

    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, "a.ppm a.txt\nb.ppm b.txt\n")
        .map_err(|e| crate::error::Error::io(&manifest, e))?;
    Ok(manifest)
}
