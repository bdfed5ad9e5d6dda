use crate::error::{Error, Result};

/// Row-major grayscale image with real-valued pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    source: String,
}

impl ImageBuffer {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels ({rows}x{cols})", rows * cols),
                got: format!("{} pixels", pixels.len()),
            });
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            source: String::new(),
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            pixels: vec![value; rows * cols],
            source: String::new(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pixels.push(f(r, c));
            }
        }
        Self {
            rows,
            cols,
            pixels,
            source: String::new(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.cols + col] = value;
    }

    /// Copies the `rows x cols` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Result<Self> {
        if top + rows > self.rows || left + cols > self.cols {
            return Err(Error::ImageTooSmall {
                rows: self.rows,
                cols: self.cols,
                min_rows: top + rows,
                min_cols: left + cols,
            });
        }
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in top..top + rows {
            let start = r * self.cols + left;
            pixels.extend_from_slice(&self.pixels[start..start + cols]);
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            source: self.source.clone(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn ensure_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{rows}x{cols} image"),
                got: format!("{}x{} image", self.rows, self.cols),
            });
        }
        Ok(())
    }
}
