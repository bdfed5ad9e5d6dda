//! Local binary pattern histograms (plain, non rotation-invariant codes).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::image_buffer::ImageBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct LbpHistogram {
    /// `2^P` bins normalized to sum to one.
    pub bins: Vec<f64>,
    pub neighbors: usize,
    pub radius: usize,
    /// Number of pixels that received a code.
    pub coded_pixels: usize,
}

/// Integer offsets `(d_row, d_col)` of the `P` neighbors on a circle of
/// radius `R`, counter-clockwise starting east. For `P = 8, R = 1` these
/// are the eight adjacent pixels.
pub fn neighbor_offsets(neighbors: usize, radius: usize) -> Vec<(isize, isize)> {
    let r = radius as f64;
    (0..neighbors)
        .map(|p| {
            let a = 2.0 * PI * p as f64 / neighbors as f64;
            (
                -(r * a.sin()).round() as isize,
                (r * a.cos()).round() as isize,
            )
        })
        .collect()
}

/// Code of every interior pixel: `sum 2^p [g_p >= g_c]`.
pub fn lbp_codes(image: &ImageBuffer, neighbors: usize, radius: usize) -> Result<Vec<u32>> {
    if neighbors == 0 || neighbors > 24 {
        return Err(Error::InvalidParameter(format!(
            "LBP neighbor count {neighbors} not in 1..=24"
        )));
    }
    let side = 2 * radius + 1;
    if image.rows() < side || image.cols() < side {
        return Err(Error::ImageTooSmall {
            rows: image.rows(),
            cols: image.cols(),
            min_rows: side,
            min_cols: side,
        });
    }
    let cols = image.cols() as isize;
    let offsets: Vec<isize> = neighbor_offsets(neighbors, radius)
        .into_iter()
        .map(|(dr, dc)| dr * cols + dc)
        .collect();
    let px = image.pixels();
    let mut codes = Vec::with_capacity((image.rows() - 2 * radius) * (image.cols() - 2 * radius));
    for r in radius..image.rows() - radius {
        for c in radius..image.cols() - radius {
            let center = r as isize * cols + c as isize;
            let gc = px[center as usize];
            let code = offsets.iter().enumerate().fold(0u32, |acc, (p, off)| {
                acc | (u32::from(px[(center + off) as usize] >= gc) << p)
            });
            codes.push(code);
        }
    }
    Ok(codes)
}

pub fn lbp_features(image: &ImageBuffer, neighbors: usize, radius: usize) -> Result<LbpHistogram> {
    let codes = lbp_codes(image, neighbors, radius)?;
    let mut bins = vec![0.0; 1 << neighbors];
    for &c in &codes {
        bins[c as usize] += 1.0;
    }
    let n = codes.len() as f64;
    bins.iter_mut().for_each(|b| *b /= n);
    Ok(LbpHistogram {
        bins,
        neighbors,
        radius,
        coded_pixels: codes.len(),
    })
}

#[derive(Debug, Clone)]
pub struct Lbp {
    pub neighbors: usize,
    pub radius: usize,
}

impl Default for Lbp {
    fn default() -> Self {
        Self {
            neighbors: 8,
            radius: 1,
        }
    }
}

impl FeatureExtractor for Lbp {
    fn name(&self) -> &str {
        "lbp"
    }

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        Ok(lbp_features(image, self.neighbors, self.radius)?.bins)
    }
}
