//! Image histograms: MNIST IDX files, synthetic images, and the pixel-grid cost.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
/// Added to every pixel before normalization so that no marginal entry is zero.
pub const PIXEL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageHistogram {
    pub pixels: Array1<f64>,
    pub side: usize,
}

impl ImageHistogram {
    /// Adds [`PIXEL_FLOOR`] to a `side × side` intensity grid and normalizes it.
    pub fn from_intensities(values: Vec<f64>, side: usize) -> Result<Self> {
        if values.len() != side * side {
            return Err(BenchError::Format(format!(
                "{} intensities for a {side}x{side} image",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(BenchError::Format("intensities must be finite and nonnegative".into()));
        }
        let floored: Vec<f64> = values.iter().map(|v| v + PIXEL_FLOOR).collect();
        let total: f64 = floored.iter().sum();
        Ok(Self {
            pixels: Array1::from_iter(floored.iter().map(|v| v / total)),
            side,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Raw images from an IDX3 file, scaled to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut cur = Cursor::new(bytes);
    let header = |cur: &mut Cursor<&[u8]>, what: &str| {
        cur.read_u32::<BigEndian>()
            .map_err(|_| BenchError::Format(format!("IDX header ends before the {what}")))
    };
    let magic = header(&mut cur, "magic number")?;
    if magic == LABEL_MAGIC {
        return Err(BenchError::Format(
            "this is an IDX label file; pass the image file instead".into(),
        ));
    }
    if magic != IMAGE_MAGIC {
        return Err(BenchError::Format(format!("bad IDX magic number {magic:#010x}")));
    }
    let count = header(&mut cur, "image count")? as usize;
    let rows = header(&mut cur, "row count")? as usize;
    let cols = header(&mut cur, "column count")? as usize;
    let size = rows * cols;
    let expected = count.checked_mul(size).ok_or_else(|| BenchError::Format("IDX dimensions overflow".into()))?;
    let mut data = Vec::new();
    cur.read_to_end(&mut data).expect("reading from memory");
    if data.len() < expected {
        return Err(BenchError::Format(format!(
            "IDX file truncated: {} of {expected} pixel bytes present",
            data.len()
        )));
    }
    let images = data[..expected]
        .chunks(size.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    Ok(IdxImages { rows, cols, images })
}

/// Labels from an IDX1 file. Accepted for completeness; the benchmark does not use them.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| BenchError::Format("IDX header ends before the magic number".into()))?;
    if magic != LABEL_MAGIC {
        return Err(BenchError::Format(format!("bad IDX label magic number {magic:#010x}")));
    }
    let count = cur
        .read_u32::<BigEndian>()
        .map_err(|_| BenchError::Format("IDX header ends before the label count".into()))? as usize;
    let mut labels = Vec::new();
    cur.read_to_end(&mut labels).expect("reading from memory");
    if labels.len() < count {
        return Err(BenchError::Format("IDX label file truncated".into()));
    }
    labels.truncate(count);
    Ok(labels)
}

/// Averages `factor × factor` blocks (partial blocks at the edge average what they cover).
pub fn block_average(image: &[f64], rows: usize, cols: usize, factor: usize) -> (Vec<f64>, usize, usize) {
    let factor = factor.max(1);
    let (out_rows, out_cols) = (rows.div_ceil(factor), cols.div_ceil(factor));
    let mut out = vec![0.0; out_rows * out_cols];
    for r in 0..out_rows {
        for c in 0..out_cols {
            let mut sum = 0.0;
            let mut count = 0;
            for i in r * factor..((r + 1) * factor).min(rows) {
                for j in c * factor..((c + 1) * factor).min(cols) {
                    sum += image[i * cols + j];
                    count += 1;
                }
            }
            out[r * out_cols + c] = sum / count as f64;
        }
    }
    (out, out_rows, out_cols)
}

/// Centers the image in a `side × side` frame, cropping or zero-padding as needed.
pub fn center_to_side(image: &[f64], rows: usize, cols: usize, side: usize) -> Vec<f64> {
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        let src_r = r as isize + (rows as isize - side as isize) / 2;
        if src_r < 0 || src_r >= rows as isize {
            continue;
        }
        for c in 0..side {
            let src_c = c as isize + (cols as isize - side as isize) / 2;
            if src_c < 0 || src_c >= cols as isize {
                continue;
            }
            out[r * side + c] = image[src_r as usize * cols + src_c as usize];
        }
    }
    out
}

/// Downsamples by block averaging with factor `⌈max(rows, cols)/side⌉`, then centers.
pub fn to_histogram(image: &[f64], rows: usize, cols: usize, side: usize) -> Result<ImageHistogram> {
    let factor = rows.max(cols).div_ceil(side);
    let (small, r, c) = block_average(image, rows, cols, factor);
    ImageHistogram::from_intensities(center_to_side(&small, r, c, side), side)
}

/// Samples `count` distinct images uniformly and turns each into a `side × side` histogram.
pub fn load_mnist(path: &Path, count: usize, seed: u64, side: usize) -> Result<Vec<ImageHistogram>> {
    if side == 0 {
        return Err(BenchError::Usage("side must be positive".into()));
    }
    let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
    let idx = parse_idx_images(&bytes)?;
    if count > idx.images.len() {
        return Err(BenchError::Usage(format!(
            "requested {count} images but {} holds only {}",
            path.display(),
            idx.images.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, idx.images.len(), count)
        .into_iter()
        .map(|k| to_histogram(&idx.images[k], idx.rows, idx.cols, side))
        .collect()
}

/// `⌈fraction·side²⌉` distinct foreground pixels with intensities in `(0, 1]` on a
/// background of [`PIXEL_FLOOR`], normalized.
pub fn synthetic_images(count: usize, side: usize, fraction: f64, seed: u64) -> Result<Vec<ImageHistogram>> {
    if side < 2 {
        return Err(BenchError::Usage(format!("side must be at least 2, got {side}")));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(BenchError::Usage(format!(
            "foreground fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = side * side;
    let foreground = ((fraction * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut values = vec![0.0; n];
            for k in sample(&mut rng, n, foreground) {
                values[k] = 1.0 - rng.random::<f64>();
            }
            ImageHistogram::from_intensities(values, side)
        })
        .collect()
}

/// Euclidean distance between pixel positions, indexed row-major.
pub fn pixel_cost(side: usize) -> Array2<f64> {
    let n = side * side;
    Array2::from_shape_fn((n, n), |(p, q)| {
        let (r1, c1) = ((p / side) as f64, (p % side) as f64);
        let (r2, c2) = ((q / side) as f64, (q % side) as f64);
        ((r1 - r2).powi(2) + (c1 - c2).powi(2)).sqrt()
    })
}
