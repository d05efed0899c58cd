//! Dataset loading and crop sampling.
//!
//! A dataset manifest is a text file with one `image-path annotation-path`
//! pair per line ('#' starts a comment). Annotations are one `x,y` decimal
//! pair per line. Images smaller than the crop size are mirror-padded
//! (symmetric reflection) before sampling.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::density::{render_density, DensityMap, DotAnnotations};
use crate::error::{Error, Result};
use crate::image::{read_pnm, resize_cap, Image};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub annotation_path: PathBuf,
}

/// Parses a manifest file relative to its own directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (img, ann) = match (fields.next(), fields.next(), fields.next()) {
            (Some(i), Some(a), None) => (i, a),
            _ => {
                return Err(Error::parse(
                    path,
                    format!("line {}: expected 'image-path annotation-path'", lineno + 1),
                ))
            }
        };
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry {
            image_path: resolve(img),
            annotation_path: resolve(ann),
        });
    }
    Ok(entries)
}

/// Parses `x,y` decimal coordinate lines; '#' starts a comment.
pub fn read_annotations(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::parse(path, format!("line {}: expected 'x,y'", lineno + 1));
        let (xs, ys) = line.split_once(',').ok_or_else(bad)?;
        let x: f64 = xs.trim().parse().map_err(|_| bad())?;
        let y: f64 = ys.trim().parse().map_err(|_| bad())?;
        points.push((x, y));
    }
    Ok(points)
}

/// One fully prepared sample: capped image, validated dots, rendered
/// full-resolution density target.
#[derive(Clone, Debug)]
pub struct LoadedImage {
    pub id: String,
    pub image: Image,
    pub dots: DotAnnotations,
    pub density: DensityMap,
}

impl LoadedImage {
    pub fn ground_truth_count(&self) -> f64 {
        self.dots.count() as f64
    }
}

/// Loads one manifest entry: image + dots, bounds check, resize cap,
/// density rendering.
pub fn load_entry(entry: &ManifestEntry, sigma: f64, max_dim: usize) -> Result<LoadedImage> {
    let image = read_pnm(&entry.image_path)?;
    let id = entry
        .image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.image_path.to_string_lossy().into_owned());
    let dots = DotAnnotations {
        image_id: id.clone(),
        points: read_annotations(&entry.annotation_path)?,
    };
    dots.validate(image.h, image.w)?;
    let (image, dots) = resize_cap(&image, &dots, max_dim);
    let density = render_density(&dots, image.h, image.w, sigma);
    Ok(LoadedImage {
        id,
        image,
        dots,
        density,
    })
}

pub fn load_manifest(path: &Path, sigma: f64, max_dim: usize) -> Result<Vec<LoadedImage>> {
    let entries = read_manifest(path)?;
    entries.iter().map(|e| load_entry(e, sigma, max_dim)).collect()
}

/// Symmetric mirror index: maps any integer into `[0, n)` by reflecting at
/// the boundaries (edge pixels repeat, so `n = 1` degenerates to clamping).
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Mirror-pads an image on the right/bottom to at least `min_h x min_w`.
pub fn pad_image_to(image: &Image, min_h: usize, min_w: usize) -> Image {
    if image.h >= min_h && image.w >= min_w {
        return image.clone();
    }
    let (nh, nw) = (image.h.max(min_h), image.w.max(min_w));
    let mut out = Image::filled(nh, nw, 0);
    for y in 0..nh {
        let sy = mirror_index(y as isize, image.h);
        for x in 0..nw {
            let sx = mirror_index(x as isize, image.w);
            out.set_pixel(y, x, image.pixel(sy, sx));
        }
    }
    out
}

/// Mirror-pads a density map on the right/bottom to at least `min_h x min_w`.
pub fn pad_density_to(map: &DensityMap, min_h: usize, min_w: usize) -> DensityMap {
    if map.h >= min_h && map.w >= min_w {
        return map.clone();
    }
    let (nh, nw) = (map.h.max(min_h), map.w.max(min_w));
    let mut out = DensityMap::zeros(nh, nw);
    for y in 0..nh {
        let sy = mirror_index(y as isize, map.h);
        for x in 0..nw {
            let sx = mirror_index(x as isize, map.w);
            out.values[y * nw + x] = map.at(sy, sx);
        }
    }
    out
}

/// Samples `count` axis-aligned crops of `size x size` at uniform random
/// offsets. Image and density are cropped at identical offsets; offsets are
/// drawn in a fixed order from `rng`, so the result is deterministic per
/// seed.
pub fn sample_crops<R: Rng>(
    image: &Image,
    density: &DensityMap,
    size: usize,
    count: usize,
    rng: &mut R,
) -> Vec<(Image, DensityMap)> {
    assert_eq!((image.h, image.w), (density.h, density.w), "image/density size mismatch");
    let image = pad_image_to(image, size, size);
    let density = pad_density_to(density, size, size);
    let (h, w) = (image.h, image.w);
    (0..count)
        .map(|_| {
            let y0 = rng.gen_range(0..=h - size);
            let x0 = rng.gen_range(0..=w - size);
            (image.crop(y0, x0, size, size), density.crop(y0, x0, size, size))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn manifest_parsing_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("set.txt");
        std::fs::write(&manifest, "# fixture\na.ppm a.txt\nsub/b.ppm sub/b.txt  # pair\n").unwrap();
        let entries = read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].image_path, dir.path().join("a.ppm"));
        assert_eq!(entries[1].annotation_path, dir.path().join("sub/b.txt"));
    }

    #[test]
    fn malformed_manifest_line_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("bad.txt");
        std::fs::write(&manifest, "only-one-field\n").unwrap();
        assert!(read_manifest(&manifest).is_err());
    }

    #[test]
    fn annotation_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let ann = dir.path().join("a.txt");
        std::fs::write(&ann, "# heads\n12.5,3\n 1 , 2.25 \n").unwrap();
        let pts = read_annotations(&ann).unwrap();
        assert_eq!(pts, vec![(12.5, 3.0), (1.0, 2.25)]);
    }

    #[test]
    fn crops_are_deterministic_per_seed() {
        let image = Image::filled(32, 32, 9);
        let density = DensityMap::zeros(32, 32);
        let a = sample_crops(&image, &density, 16, 5, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_crops(&image, &density, 16, 5, &mut ChaCha8Rng::seed_from_u64(7));
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
        }
    }

    #[test]
    fn crop_count_never_exceeds_full_count() {
        let dots = DotAnnotations {
            image_id: "t".into(),
            points: vec![(8.0, 8.0), (20.0, 24.0), (30.0, 5.0)],
        };
        let density = render_density(&dots, 32, 32, 2.0);
        let image = Image::filled(32, 32, 0);
        let full = density.count();
        let crops = sample_crops(&image, &density, 16, 8, &mut ChaCha8Rng::seed_from_u64(3));
        for (_, d) in crops {
            assert!(d.count() <= full + 1e-9);
        }
    }

    #[test]
    fn exact_size_image_yields_whole_image_crops() {
        let image = Image::filled(16, 16, 3);
        let density = DensityMap::zeros(16, 16);
        let crops = sample_crops(&image, &density, 16, 3, &mut ChaCha8Rng::seed_from_u64(5));
        for (img, _) in crops {
            assert_eq!(img, image);
        }
    }

    #[test]
    fn small_images_are_mirror_padded() {
        let mut image = Image::filled(2, 3, 0);
        image.set_pixel(1, 2, [9, 9, 9]);
        let padded = pad_image_to(&image, 4, 4);
        assert_eq!((padded.h, padded.w), (4, 4));
        // Row 2 mirrors row 1, column 3 mirrors column 2.
        assert_eq!(padded.pixel(2, 2), [9, 9, 9]);
        assert_eq!(padded.pixel(1, 3), [9, 9, 9]);
        assert_eq!(padded.pixel(2, 3), [9, 9, 9]);
    }

    #[test]
    fn mirror_index_single_row_clamps() {
        for i in 0..5 {
            assert_eq!(mirror_index(i, 1), 0);
        }
        assert_eq!(mirror_index(3, 3), 2);
        assert_eq!(mirror_index(4, 3), 1);
    }
}
