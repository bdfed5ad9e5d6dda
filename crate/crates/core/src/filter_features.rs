//! Filter-bank texture features: each kernel is slid over the image (valid
//! region only) and the variance of the filtered image is one feature.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::feature::{FeatureExtractor, FeatureVector};
use crate::image_buffer::ImageBuffer;
use crate::modal_basis::{build_operator, solve_modes, GridSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    name: String,
    size: usize,
    /// Row-major `size x size` kernels.
    kernels: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn new(name: impl Into<String>, size: usize, kernels: Vec<Vec<f64>>) -> Result<Self> {
        if size == 0 || kernels.is_empty() {
            return Err(Error::InvalidParameter("empty filter bank".into()));
        }
        if let Some(k) = kernels.iter().find(|k| k.len() != size * size) {
            return Err(Error::DimensionMismatch {
                expected: format!("{size}x{size} kernel"),
                got: format!("{} taps", k.len()),
            });
        }
        Ok(Self {
            name: name.into(),
            size,
            kernels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    /// Plain-text dump: one `size x size` block per kernel, blank-line
    /// separated, each preceded by a `#` comment.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# bank {} ({} kernels, {}x{})",
            self.name,
            self.len(),
            self.size,
            self.size
        )?;
        for (k, kernel) in self.kernels.iter().enumerate() {
            writeln!(out)?;
            writeln!(out, "# kernel {k}")?;
            for row in kernel.chunks(self.size) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
        Ok(())
    }
}

/// 1D DCT basis vectors of length `n`. For `n = 3` the integer vectors
/// `{1,1,1}`, `{1,0,-1}`, `{1,-2,1}` are used.
pub fn dct_vectors(n: usize) -> Vec<Vec<f64>> {
    if n == 3 {
        return vec![
            vec![1.0, 1.0, 1.0],
            vec![1.0, 0.0, -1.0],
            vec![1.0, -2.0, 1.0],
        ];
    }
    let nf = n as f64;
    (0..n)
        .map(|m| {
            (1..=n)
                .map(|k| {
                    if m == 0 {
                        1.0 / nf.sqrt()
                    } else {
                        (2.0 / nf).sqrt() * (((2 * k - 1) * m) as f64 * PI / (2.0 * nf)).cos()
                    }
                })
                .collect()
        })
        .collect()
}

/// The `n^2` outer-product kernels `h_m h_n^T`, in row-major `(m, n)` order.
pub fn dct_filter_bank(n: usize) -> Result<FilterBank> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("DCT filter size {n} < 2")));
    }
    let h = dct_vectors(n);
    let mut kernels = Vec::with_capacity(n * n);
    for hm in &h {
        for hn in &h {
            let kernel = hm
                .iter()
                .flat_map(|a| hn.iter().map(move |b| a * b))
                .collect();
            kernels.push(kernel);
        }
    }
    FilterBank::new(
        if n == 3 {
            "dct3".to_string()
        } else {
            format!("dct{n}")
        },
        n,
        kernels,
    )
}

/// The nine modes of the 3x3 free-plate basis, as 3x3 kernels.
pub fn dmd_filter_bank() -> Result<FilterBank> {
    let grid = GridSpec::square(3)?;
    let basis = solve_modes(&build_operator(grid), grid.len())?;
    let kernels = (0..basis.len())
        .map(|j| basis.modes().column(j).iter().copied().collect())
        .collect();
    FilterBank::new("dmd3", 3, kernels)
}

/// Valid-region cross-correlation of `image` with a row-major square kernel.
pub fn correlate_valid(image: &ImageBuffer, kernel: &[f64], size: usize) -> Result<ImageBuffer> {
    check_fits(image, size)?;
    let out_rows = image.rows() - size + 1;
    let out_cols = image.cols() - size + 1;
    let mut out = vec![0.0; out_rows * out_cols];
    correlate_into(image, kernel, size, &mut out);
    ImageBuffer::new(out_rows, out_cols, out)
}

fn check_fits(image: &ImageBuffer, size: usize) -> Result<()> {
    if image.rows() < size || image.cols() < size {
        return Err(Error::ImageTooSmall {
            rows: image.rows(),
            cols: image.cols(),
            min_rows: size,
            min_cols: size,
        });
    }
    Ok(())
}

fn correlate_into(image: &ImageBuffer, kernel: &[f64], size: usize, out: &mut [f64]) {
    let cols = image.cols();
    let out_cols = cols - size + 1;
    let px = image.pixels();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (ki, krow) in kernel.chunks(size).enumerate() {
        for (kj, &w) in krow.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (r, out_row) in out.chunks_mut(out_cols).enumerate() {
                let src = &px[(r + ki) * cols + kj..(r + ki) * cols + kj + out_cols];
                for (o, s) in out_row.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}

/// Population variance (divisor = number of samples).
pub fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn filter_variance_features(image: &ImageBuffer, bank: &FilterBank) -> Result<FeatureVector> {
    FilterVariance::new(bank.clone(), bank.name()).extract(image)
}

/// Filter-variance extractor over a fixed bank.
#[derive(Debug, Clone)]
pub struct FilterVariance {
    bank: FilterBank,
    name: String,
}

impl FilterVariance {
    pub fn new(bank: FilterBank, name: impl Into<String>) -> Self {
        Self {
            bank,
            name: name.into(),
        }
    }

    pub fn dct3() -> Result<Self> {
        Ok(Self::new(dct_filter_bank(3)?, "dct3"))
    }

    pub fn filtering_dmd() -> Result<Self> {
        Ok(Self::new(dmd_filter_bank()?, "filtering_dmd"))
    }

    pub fn bank(&self) -> &FilterBank {
        &self.bank
    }
}

impl FeatureExtractor for FilterVariance {
    fn name(&self) -> &str {
        &self.name
    }

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        let size = self.bank.size;
        check_fits(image, size)?;
        let mut buf = vec![0.0; (image.rows() - size + 1) * (image.cols() - size + 1)];
        Ok(self
            .bank
            .kernels
            .iter()
            .map(|k| {
                correlate_into(image, k, size, &mut buf);
                population_variance(&buf)
            })
            .collect())
    }
}
