//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use modal_texture::ImageBuffer;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform 8-bit-range pixels.
pub fn random_image(rows: usize, cols: usize, rng: &mut impl Rng) -> ImageBuffer {
    ImageBuffer::from_fn(rows, cols, |_, _| rng.random_range(0.0..256.0))
}

/// Integer gray values, as decoded from an 8-bit file.
pub fn random_byte_image(rows: usize, cols: usize, rng: &mut impl Rng) -> ImageBuffer {
    ImageBuffer::from_fn(rows, cols, |_, _| f64::from(rng.random_range(0u8..=255)))
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// ascending order with matching unit eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() < 1e-15 * a.norm() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Bending energy of a row-major field: squared second differences along
/// rows and columns plus twice the squared mixed differences.
pub fn bending_energy(u: &[f64], rows: usize, cols: usize) -> f64 {
    let at = |r: usize, c: usize| u[r * cols + c];
    let mut e = 0.0;
    for r in 0..rows {
        for c in 1..cols - 1 {
            e += (at(r, c - 1) - 2.0 * at(r, c) + at(r, c + 1)).powi(2);
        }
    }
    for r in 1..rows - 1 {
        for c in 0..cols {
            e += (at(r - 1, c) - 2.0 * at(r, c) + at(r + 1, c)).powi(2);
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            e += 2.0 * (at(r, c) - at(r, c + 1) - at(r + 1, c) + at(r + 1, c + 1)).powi(2);
        }
    }
    e
}

/// The symmetric operator whose quadratic form is [`bending_energy`],
/// recovered entry by entry through polarization.
pub fn operator_from_energy(rows: usize, cols: usize) -> DMatrix<f64> {
    let n = rows * cols;
    let unit = |i: usize| {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    };
    DMatrix::from_fn(n, n, |i, j| {
        let (ei, ej) = (unit(i), unit(j));
        let plus: Vec<f64> = ei.iter().zip(&ej).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = ei.iter().zip(&ej).map(|(a, b)| a - b).collect();
        (bending_energy(&plus, rows, cols) - bending_energy(&minus, rows, cols)) / 4.0
    })
}

/// Least-squares coefficients of `p` in the column span of `q`, by SVD.
pub fn least_squares(q: &DMatrix<f64>, p: &[f64]) -> DVector<f64> {
    q.clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(p), 1e-13)
        .expect("svd with both factors")
}

/// Orthogonal projector onto the span of the given columns.
pub fn span_projector(columns: &DMatrix<f64>) -> DMatrix<f64> {
    let pinv = columns
        .clone()
        .pseudo_inverse(1e-12)
        .expect("pseudo-inverse");
    columns * pinv
}

/// Quantized level of an 8-bit pixel.
pub fn level(value: f64, levels: usize) -> usize {
    ((value as usize) * levels / 256).min(levels - 1)
}

/// Pair counts over every ordered pixel pair whose displacement is one of
/// the unit offsets for 0, pi, pi/2 and 3pi/4 (rows grow downwards).
pub fn brute_glcm(image: &ImageBuffer, levels: usize) -> Vec<f64> {
    const OFFSETS: [(isize, isize); 4] = [(0, 1), (0, -1), (-1, 0), (-1, -1)];
    let (rows, cols) = (image.rows() as isize, image.cols() as isize);
    let mut counts = vec![0.0; levels * levels];
    for r1 in 0..rows {
        for c1 in 0..cols {
            for r2 in 0..rows {
                for c2 in 0..cols {
                    let hits = OFFSETS.iter().filter(|&&d| d == (r2 - r1, c2 - c1)).count();
                    let i = level(image.get(r1 as usize, c1 as usize), levels);
                    let j = level(image.get(r2 as usize, c2 as usize), levels);
                    counts[i * levels + j] += hits as f64;
                }
            }
        }
    }
    counts
}

/// Angular second moment, contrast, correlation, variance and inverse
/// difference moment of a normalized co-occurrence matrix, straight from
/// their textbook double sums.
pub fn brute_haralick5(p: &[f64], g: usize) -> [f64; 5] {
    let at = |i: usize, j: usize| p[i * g + j];
    let px: Vec<f64> = (0..g).map(|i| (0..g).map(|j| at(i, j)).sum()).collect();
    let py: Vec<f64> = (0..g).map(|j| (0..g).map(|i| at(i, j)).sum()).collect();
    let mu_x: f64 = (0..g).map(|i| i as f64 * px[i]).sum();
    let mu_y: f64 = (0..g).map(|j| j as f64 * py[j]).sum();
    let sd_x = (0..g)
        .map(|i| (i as f64 - mu_x).powi(2) * px[i])
        .sum::<f64>()
        .sqrt();
    let sd_y = (0..g)
        .map(|j| (j as f64 - mu_y).powi(2) * py[j])
        .sum::<f64>()
        .sqrt();
    let mut asm = 0.0;
    let mut contrast = 0.0;
    let mut corr = 0.0;
    let mut var = 0.0;
    let mut idm = 0.0;
    for n in 0..g {
        for i in 0..g {
            for j in 0..g {
                if i.abs_diff(j) == n {
                    contrast += (n * n) as f64 * at(i, j);
                }
            }
        }
    }
    for i in 0..g {
        for j in 0..g {
            let v = at(i, j);
            let (fi, fj) = (i as f64, j as f64);
            asm += v * v;
            corr += fi * fj * v;
            var += (fi - mu_x).powi(2) * v;
            idm += v / (1.0 + (fi - fj).powi(2));
        }
    }
    let corr = if sd_x * sd_y > 0.0 {
        (corr - mu_x * mu_y) / (sd_x * sd_y)
    } else {
        0.0
    };
    [asm, contrast, corr, var, idm]
}

/// Unnormalized 8-neighbour LBP histogram. Bit order: E, NE, N, NW, W,
/// SW, S, SE.
pub fn brute_lbp(image: &ImageBuffer) -> Vec<f64> {
    const RING: [(isize, isize); 8] = [
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];
    let mut hist = vec![0.0; 256];
    for r in 1..image.rows() - 1 {
        for c in 1..image.cols() - 1 {
            let center = image.get(r, c);
            let mut code = 0usize;
            for (bit, (dr, dc)) in RING.iter().enumerate() {
                let g = image.get((r as isize + dr) as usize, (c as isize + dc) as usize);
                if g >= center {
                    code += 1 << bit;
                }
            }
            hist[code] += 1.0;
        }
    }
    hist
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
