//! Gray-level co-occurrence matrices and Haralick's texture statistics.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::image_buffer::ImageBuffer;

/// Default quantization depth for 8-bit input.
pub const DEFAULT_LEVELS: usize = 32;

/// Directions accumulated by default: 0, pi, pi/2 and 3pi/4.
pub const DEFAULT_DIRECTIONS: [f64; 4] = [0.0, PI, PI / 2.0, 3.0 * PI / 4.0];

/// Number of Haralick features produced (the maximal correlation
/// coefficient is omitted).
pub const HARALICK_FEATURES: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmParams {
    pub distance: usize,
    pub directions: Vec<f64>,
    pub levels: usize,
}

impl Default for GlcmParams {
    fn default() -> Self {
        Self {
            distance: 1,
            directions: DEFAULT_DIRECTIONS.to_vec(),
            levels: DEFAULT_LEVELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    /// Row-major `levels x levels` pair counts.
    counts: Vec<f64>,
    normalized: Vec<f64>,
    params: GlcmParams,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn count(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.levels + j]
    }

    /// Row-major probabilities `p(i, j)`.
    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.normalized[i * self.levels + j]
    }

    pub fn params(&self) -> &GlcmParams {
        &self.params
    }
}

/// Uniform quantization of `[0, 256)` into `levels` bins.
pub fn quantize(value: f64, levels: usize) -> usize {
    let q = (value * levels as f64 / 256.0).floor();
    if q <= 0.0 {
        0
    } else {
        (q as usize).min(levels - 1)
    }
}

/// Pixel offset `(d_row, d_col)` for direction `theta` (radians,
/// counter-clockwise from the +column axis, rows growing downwards).
pub fn direction_offset(theta: f64, distance: usize) -> (isize, isize) {
    let d = distance as f64;
    let dc = (d * theta.cos()).round() as isize;
    let dr = -(d * theta.sin()).round() as isize;
    (dr, dc)
}

/// Counts ordered pairs `(value at p, value at p + offset)` for every
/// direction, then normalizes the sum.
pub fn compute_glcm(image: &ImageBuffer, params: &GlcmParams) -> Result<Glcm> {
    let levels = params.levels;
    if levels < 2 {
        return Err(Error::InvalidParameter(format!(
            "GLCM needs at least 2 gray levels, got {levels}"
        )));
    }
    let (rows, cols) = (image.rows() as isize, image.cols() as isize);
    let quantized: Vec<usize> = image
        .pixels()
        .iter()
        .map(|&v| quantize(v, levels))
        .collect();
    let mut counts = vec![0.0; levels * levels];
    for &theta in &params.directions {
        let (dr, dc) = direction_offset(theta, params.distance);
        let r_range = (0.max(-dr))..(rows.min(rows - dr));
        let c_range = (0.max(-dc))..(cols.min(cols - dc));
        for r in r_range {
            let row = (r * cols) as usize;
            let row2 = ((r + dr) * cols) as usize;
            for c in c_range.clone() {
                let i = quantized[row + c as usize];
                let j = quantized[row2 + (c + dc) as usize];
                counts[i * levels + j] += 1.0;
            }
        }
    }
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::ImageTooSmall {
            rows: image.rows(),
            cols: image.cols(),
            min_rows: params.distance + 1,
            min_cols: params.distance + 1,
        });
    }
    let normalized = counts.iter().map(|c| c / total).collect();
    Ok(Glcm {
        levels,
        counts,
        normalized,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaralickFeatures {
    pub values: [f64; HARALICK_FEATURES],
    /// Set when the marginals have zero variance and correlation was defined
    /// as 0.
    pub degenerate_correlation: bool,
}

impl HaralickFeatures {
    pub fn angular_second_moment(&self) -> f64 {
        self.values[0]
    }
    pub fn contrast(&self) -> f64 {
        self.values[1]
    }
    pub fn correlation(&self) -> f64 {
        self.values[2]
    }
    pub fn variance(&self) -> f64 {
        self.values[3]
    }
    pub fn inverse_difference_moment(&self) -> f64 {
        self.values[4]
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Haralick features 1-13 over gray levels `0..G`, natural logarithms.
///
/// 1 angular second moment, 2 contrast, 3 correlation, 4 sum of squares
/// variance, 5 inverse difference moment `sum p / (1 + (i-j)^2)`, 6 sum
/// average, 7 sum variance (about the sum average), 8 sum entropy,
/// 9 entropy, 10 difference variance, 11 difference entropy, 12-13
/// information measures of correlation.
pub fn haralick_features(glcm: &Glcm) -> HaralickFeatures {
    let g = glcm.levels;
    let p = &glcm.normalized;
    let mut px = vec![0.0; g];
    let mut py = vec![0.0; g];
    let mut p_sum = vec![0.0; 2 * g - 1];
    let mut p_diff = vec![0.0; g];

    let mut asm = 0.0;
    let mut contrast = 0.0;
    let mut idm = 0.0;
    let mut entropy = 0.0;
    let mut ij = 0.0;
    for i in 0..g {
        for j in 0..g {
            let v = p[i * g + j];
            if v == 0.0 {
                continue;
            }
            px[i] += v;
            py[j] += v;
            p_sum[i + j] += v;
            let d = i.abs_diff(j);
            p_diff[d] += v;
            let d2 = (d * d) as f64;
            asm += v * v;
            contrast += d2 * v;
            idm += v / (1.0 + d2);
            entropy -= v * v.ln();
            ij += (i * j) as f64 * v;
        }
    }

    let mean = |m: &[f64]| m.iter().enumerate().map(|(k, v)| k as f64 * v).sum::<f64>();
    let var = |m: &[f64], mu: f64| {
        m.iter()
            .enumerate()
            .map(|(k, v)| (k as f64 - mu).powi(2) * v)
            .sum::<f64>()
    };
    let mu_x = mean(&px);
    let mu_y = mean(&py);
    let var_x = var(&px, mu_x);
    let sigma_xy = (var_x * var(&py, mu_y)).sqrt();
    let degenerate_correlation = !(sigma_xy > 1e-15);
    let correlation = if degenerate_correlation {
        0.0
    } else {
        (ij - mu_x * mu_y) / sigma_xy
    };

    let sum_average = mean(&p_sum);
    let sum_variance = var(&p_sum, sum_average);
    let sum_entropy = -p_sum.iter().map(|&v| plogp(v)).sum::<f64>();
    let diff_variance = var(&p_diff, mean(&p_diff));
    let diff_entropy = -p_diff.iter().map(|&v| plogp(v)).sum::<f64>();

    let hx = -px.iter().map(|&v| plogp(v)).sum::<f64>();
    let hy = -py.iter().map(|&v| plogp(v)).sum::<f64>();
    let log_px: Vec<f64> = px
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { 0.0 })
        .collect();
    let log_py: Vec<f64> = py
        .iter()
        .map(|&v| if v > 0.0 { v.ln() } else { 0.0 })
        .collect();
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in 0..g {
        if px[i] == 0.0 {
            continue;
        }
        for j in 0..g {
            if py[j] == 0.0 {
                continue;
            }
            let log_pxy = log_px[i] + log_py[j];
            hxy1 -= p[i * g + j] * log_pxy;
            hxy2 -= px[i] * py[j] * log_pxy;
        }
    }
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 {
        (entropy - hxy1) / hmax
    } else {
        0.0
    };
    let imc2 = (1.0 - (-2.0 * (hxy2 - entropy)).exp()).max(0.0).sqrt();

    HaralickFeatures {
        values: [
            asm,
            contrast,
            correlation,
            var_x,
            idm,
            sum_average,
            sum_variance,
            sum_entropy,
            entropy,
            diff_variance,
            diff_entropy,
            imc1,
            imc2,
        ],
        degenerate_correlation,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Haralick {
    pub params: GlcmParams,
}

impl FeatureExtractor for Haralick {
    fn name(&self) -> &str {
        "haralick"
    }

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        let glcm = compute_glcm(image, &self.params)?;
        Ok(haralick_features(&glcm).values.to_vec())
    }
}
