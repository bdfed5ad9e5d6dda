//! Histogram of oriented gradients over non-overlapping cells.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::image_buffer::ImageBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
    pub cell: usize,
    pub bins: usize,
    pub cells_down: usize,
    pub cells_across: usize,
}

/// Central-difference gradients `(gx, gy)` with the one-pixel border set to
/// zero.
pub fn gradients(image: &ImageBuffer) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (image.rows(), image.cols());
    let px = image.pixels();
    let mut gx = vec![0.0; rows * cols];
    let mut gy = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 1..cols.saturating_sub(1) {
            gx[r * cols + c] = px[r * cols + c + 1] - px[r * cols + c - 1];
        }
    }
    for r in 1..rows.saturating_sub(1) {
        for c in 0..cols {
            gy[r * cols + c] = px[(r + 1) * cols + c] - px[(r - 1) * cols + c];
        }
    }
    (gx, gy)
}

/// Unsigned orientation bin of a gradient, `[0, 180)` degrees split evenly.
pub fn orientation_bin(gx: f64, gy: f64, bins: usize) -> usize {
    let mut angle = gy.atan2(gx);
    if angle < 0.0 {
        angle += PI;
    }
    if angle >= PI {
        angle -= PI;
    }
    ((angle / PI * bins as f64) as usize).min(bins - 1)
}

/// Per-cell magnitude-weighted orientation histograms, concatenated in
/// row-major cell order and L2-normalized as a whole. The image is cropped
/// to a whole number of cells.
pub fn hog_features(image: &ImageBuffer, cell: usize, bins: usize) -> Result<HogDescriptor> {
    if cell == 0 || bins == 0 {
        return Err(Error::InvalidParameter(
            "HOG cell size and bin count must be positive".into(),
        ));
    }
    if image.rows() < cell || image.cols() < cell {
        return Err(Error::ImageTooSmall {
            rows: image.rows(),
            cols: image.cols(),
            min_rows: cell,
            min_cols: cell,
        });
    }
    let cells_down = image.rows() / cell;
    let cells_across = image.cols() / cell;
    let cropped;
    let image = if cells_down * cell != image.rows() || cells_across * cell != image.cols() {
        cropped = image.crop(0, 0, cells_down * cell, cells_across * cell)?;
        &cropped
    } else {
        image
    };
    let cols = image.cols();
    let (gx, gy) = gradients(image);
    let mut values = vec![0.0; cells_down * cells_across * bins];
    for r in 0..image.rows() {
        for c in 0..cols {
            let (x, y) = (gx[r * cols + c], gy[r * cols + c]);
            let mag = x.hypot(y);
            if mag == 0.0 {
                continue;
            }
            let cell_index = (r / cell) * cells_across + c / cell;
            values[cell_index * bins + orientation_bin(x, y, bins)] += mag;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(HogDescriptor {
        values,
        cell,
        bins,
        cells_down,
        cells_across,
    })
}

#[derive(Debug, Clone)]
pub struct Hog {
    pub cell: usize,
    pub bins: usize,
}

impl Default for Hog {
    fn default() -> Self {
        Self { cell: 8, bins: 9 }
    }
}

impl FeatureExtractor for Hog {
    fn name(&self) -> &str {
        "hog"
    }

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        Ok(hog_features(image, self.cell, self.bins)?.values)
    }
}
