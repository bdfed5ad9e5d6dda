//! Symmetry-folded evaluation of a dual basis.
//!
//! Each dual row of a plate basis is even or odd under the two grid mirrors,
//! so it is fixed by one quadrant and applies to the image folded with the
//! matching signs. The dual product then costs a quarter of the dense one.

use std::cell::RefCell;

use nalgebra::DMatrix;

use crate::modal_basis::GridSpec;

const PARITY_TOL: f64 = 1e-9;
/// Images folded and multiplied together in the batched path.
const CHUNK: usize = 64;

/// Dual rows of one parity class (`2 * row parity + column parity`).
#[derive(Debug, Clone)]
struct Block {
    class: usize,
    rows: usize,
    /// `rows x quadrant` coefficients, row-major.
    packed: Vec<f64>,
    /// The same coefficients in zero-padded panels of [`PANEL`] rows,
    /// interleaved along the quadrant.
    panels: Vec<f64>,
    /// Coordinate index of each row.
    outputs: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(super) struct FoldedDual {
    rows: usize,
    cols: usize,
    half_rows: usize,
    half_cols: usize,
    n_q: usize,
    blocks: Vec<Block>,
}

/// Per-thread buffers reused across calls.
#[derive(Default)]
struct Workspace {
    /// Class-major, then image-major folds.
    folds: Vec<f64>,
    prods: Vec<f64>,
    lambda: Vec<f64>,
}

thread_local! {
    static WORKSPACE: RefCell<Workspace> = RefCell::new(Workspace::default());
}

/// 0 if `gap(+1)` vanishes everywhere, 1 if `gap(-1)` does.
fn parity(
    n_rows: usize,
    n_cols: usize,
    tol: f64,
    gap: impl Fn(usize, usize, f64) -> f64,
) -> Option<usize> {
    let cells = || (0..n_rows).flat_map(|r| (0..n_cols).map(move |c| (r, c)));
    [1.0, -1.0]
        .iter()
        .position(|&sign| cells().all(|(r, c)| gap(r, c, sign) <= tol))
}

impl FoldedDual {
    /// `None` when some dual row lacks a definite mirror parity.
    pub(super) fn new(dual: &DMatrix<f64>, grid: GridSpec) -> Option<Self> {
        let (rows, cols) = (grid.rows(), grid.cols());
        let (half_rows, half_cols) = (rows.div_ceil(2), cols.div_ceil(2));
        let mut blocks: Vec<Block> = (0..4)
            .map(|class| Block {
                class,
                rows: 0,
                packed: Vec::new(),
                panels: Vec::new(),
                outputs: Vec::new(),
            })
            .collect();
        for i in 0..dual.nrows() {
            let at = |r: usize, c: usize| dual[(i, r * cols + c)];
            let tol = PARITY_TOL * dual.row(i).amax();
            let row_odd = parity(rows, cols, tol, |r, c, s| {
                (at(r, c) - s * at(rows - 1 - r, c)).abs()
            })?;
            let col_odd = parity(rows, cols, tol, |r, c, s| {
                (at(r, c) - s * at(r, cols - 1 - c)).abs()
            })?;
            let block = &mut blocks[2 * row_odd + col_odd];
            block.rows += 1;
            block.outputs.push(i);
            for r in 0..half_rows {
                block.packed.extend((0..half_cols).map(|c| at(r, c)));
            }
        }
        blocks.retain(|b| b.rows > 0);
        let quad = half_rows * half_cols;
        for block in &mut blocks {
            block.panels = interleave(&block.packed, block.rows, quad);
        }
        Some(Self {
            rows,
            cols,
            half_rows,
            half_cols,
            n_q: dual.nrows(),
            blocks,
        })
    }

    fn quadrant(&self) -> usize {
        self.half_rows * self.half_cols
    }

    pub(super) fn apply(&self, pixels: &[f64]) -> Vec<f64> {
        self.apply_batch(&[pixels]).as_slice().to_vec()
    }

    /// One column of coordinates per image.
    pub(super) fn apply_batch(&self, images: &[&[f64]]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.n_q * images.len()];
        self.for_each(images, |j, lambda| {
            out[j * self.n_q..(j + 1) * self.n_q].copy_from_slice(lambda)
        });
        DMatrix::from_vec(self.n_q, images.len(), out)
    }

    /// Calls `visit(j, coordinates)` for each image in order.
    pub(super) fn for_each(&self, images: &[&[f64]], mut visit: impl FnMut(usize, &[f64])) {
        // Taken rather than borrowed, so `visit` may reenter.
        let mut ws = WORKSPACE.with(|w| w.take());
        let quad = self.quadrant();
        let width = CHUNK.min(images.len());
        let mut prod_at = Vec::with_capacity(self.blocks.len());
        let mut total = 0;
        for block in &self.blocks {
            prod_at.push(total);
            total += block.rows * width;
        }
        ws.folds.resize(4 * quad * width, 0.0);
        ws.prods.resize(total, 0.0);
        ws.lambda.resize(self.n_q, 0.0);
        let Workspace {
            folds,
            prods,
            lambda,
        } = &mut ws;

        for (start, chunk) in (0..).step_by(CHUNK).zip(images.chunks(CHUNK)) {
            for (j, pixels) in chunk.iter().enumerate() {
                let mut classes = folds.chunks_exact_mut(quad * width);
                self.fold(
                    pixels,
                    std::array::from_fn(|_| &mut classes.next().unwrap()[j * quad..(j + 1) * quad]),
                );
            }
            let m = chunk.len();
            for (block, &at) in self.blocks.iter().zip(&prod_at) {
                let class = block.class * quad * width;
                block.multiply(
                    &folds[class..class + m * quad],
                    &mut prods[at..at + m * block.rows],
                );
            }
            for j in 0..m {
                for (block, &at) in self.blocks.iter().zip(&prod_at) {
                    let prod = &prods[at + j * block.rows..at + (j + 1) * block.rows];
                    for (&output, &value) in block.outputs.iter().zip(prod) {
                        lambda[output] = value;
                    }
                }
                visit(start + j, lambda);
            }
        }
        WORKSPACE.with(|w| w.replace(ws));
    }

    /// Fills the even/even, even/odd, odd/even and odd/odd folds of
    /// `pixels` (row parity first).
    fn fold(&self, pixels: &[f64], parts: [&mut [f64]; 4]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports the features this copy is compiled for.
                unsafe { self.fold_avx2(pixels, parts) };
                return;
            }
        }
        self.fold_generic(pixels, parts);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn fold_avx2(&self, pixels: &[f64], parts: [&mut [f64]; 4]) {
        self.fold_generic(pixels, parts);
    }

    #[inline(always)]
    fn fold_generic(&self, pixels: &[f64], [ee, eo, oe, oo]: [&mut [f64]; 4]) {
        let (cols, hc) = (self.cols, self.half_cols);
        for r in 0..self.half_rows {
            let rm = self.rows - 1 - r;
            // The middle row of an odd grid has no mirror partner.
            let w = if rm == r { 0.0 } else { 1.0 };
            let (top, bottom) = (
                &pixels[r * cols..(r + 1) * cols],
                &pixels[rm * cols..(rm + 1) * cols],
            );
            let (tl, tr) = (&top[..hc], &top[cols - hc..]);
            let (bl, br) = (&bottom[..hc], &bottom[cols - hc..]);
            let span = r * hc..(r + 1) * hc;
            let (ee, eo) = (&mut ee[span.clone()], &mut eo[span.clone()]);
            let (oe, oo) = (&mut oe[span.clone()], &mut oo[span]);
            for c in 0..hc {
                let (a, b) = (tl[c], tr[hc - 1 - c]);
                let (p, q) = (w * bl[c], w * br[hc - 1 - c]);
                ee[c] = (a + b) + (p + q);
                eo[c] = (a - b) + (p - q);
                oe[c] = (a + b) - (p + q);
                oo[c] = (a - b) - (p - q);
            }
            if cols % 2 == 1 {
                // Likewise the middle column.
                let (a, p) = (tl[hc - 1], w * bl[hc - 1]);
                (ee[hc - 1], oe[hc - 1]) = (a + p, a - p);
                (eo[hc - 1], oo[hc - 1]) = (0.0, 0.0);
            }
        }
    }
}

impl Block {
    /// Image-major products `prod[j * rows + i] = coeffs[i] . folds[j]`.
    fn multiply(&self, folds: &[f64], prod: &mut [f64]) {
        let len = self.packed.len() / self.rows;
        let m = folds.len() / len;
        #[cfg(target_arch = "x86_64")]
        {
            if m > 2 && std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the CPU supports avx512f; shapes are checked inside.
                unsafe { wide::multiply(&self.panels, self.rows, len, folds, prod) };
                return;
            }
        }
        if m <= 2 {
            for (src, dst) in folds
                .chunks_exact(len)
                .zip(prod.chunks_exact_mut(self.rows))
            {
                dot_rows(&self.packed, src, dst);
            }
            return;
        }
        // SAFETY: the strides describe `folds` as m x len, `packed^T` as
        // len x rows and `prod` as m x rows, all within their slices.
        unsafe {
            matrixmultiply::dgemm(
                m,
                len,
                self.rows,
                1.0,
                folds.as_ptr(),
                len as isize,
                1,
                self.packed.as_ptr(),
                1,
                len as isize,
                0.0,
                prod.as_mut_ptr(),
                self.rows as isize,
                1,
            );
        }
    }
}

/// Row-major `rows x len` coefficients as panels of [`PANEL`] rows stored
/// column by column, the last panel padded with zeros.
fn interleave(packed: &[f64], rows: usize, len: usize) -> Vec<f64> {
    let mut panels = vec![0.0; rows.div_ceil(PANEL) * PANEL * len];
    for (i, row) in packed.chunks_exact(len).enumerate() {
        let panel = &mut panels[i / PANEL * PANEL * len..];
        for (k, &v) in row.iter().enumerate() {
            panel[k * PANEL + i % PANEL] = v;
        }
    }
    panels
}

const PANEL: usize = 8;

#[cfg(target_arch = "x86_64")]
mod wide {
    use std::arch::x86_64::*;

    use super::PANEL;

    /// Images per register tile.
    const TILE: usize = 8;

    /// `prod[j * rows + i] = row i . folds[j]`, with the rows given as
    /// interleaved panels.
    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn multiply(
        panels: &[f64],
        rows: usize,
        len: usize,
        folds: &[f64],
        prod: &mut [f64],
    ) {
        let m = folds.len() / len;
        let n_panels = rows.div_ceil(PANEL);
        assert!(
            panels.len() == n_panels * PANEL * len
                && folds.len() == m * len
                && prod.len() == m * rows
        );
        let (a, f, out) = (panels.as_ptr(), folds.as_ptr(), prod.as_mut_ptr());
        let mut p = 0;
        while p < n_panels {
            let pair = n_panels - p >= 2;
            let a = a.add(p * PANEL * len);
            let live = rows - p * PANEL;
            let mut j = 0;
            while j < m {
                let (f, out) = (f.add(j * len), out.add(j * rows + p * PANEL));
                let full = m - j >= TILE;
                match (pair, full) {
                    (true, true) => tile::<2, TILE>(a, f, len, out, rows, live),
                    (true, false) => tile::<2, 1>(a, f, len, out, rows, live),
                    (false, true) => tile::<1, TILE>(a, f, len, out, rows, live),
                    (false, false) => tile::<1, 1>(a, f, len, out, rows, live),
                }
                j += if full { TILE } else { 1 };
            }
            p += if pair { 2 } else { 1 };
        }
    }

    /// `NP` panels against `MR` images; `live` rows remain from the first panel.
    #[inline(always)]
    unsafe fn tile<const NP: usize, const MR: usize>(
        a: *const f64,
        f: *const f64,
        len: usize,
        out: *mut f64,
        rows: usize,
        live: usize,
    ) {
        let mut acc = [[_mm512_setzero_pd(); NP]; MR];
        for k in 0..len {
            let b: [__m512d; NP] =
                std::array::from_fn(|q| _mm512_loadu_pd(a.add((q * len + k) * PANEL)));
            for (r, acc) in acc.iter_mut().enumerate() {
                let x = _mm512_set1_pd(*f.add(r * len + k));
                for q in 0..NP {
                    acc[q] = _mm512_fmadd_pd(x, b[q], acc[q]);
                }
            }
        }
        for (r, acc) in acc.iter().enumerate() {
            for (q, &v) in acc.iter().enumerate() {
                let lanes = (live - q * PANEL).min(PANEL);
                _mm512_mask_storeu_pd(
                    out.add(r * rows + q * PANEL),
                    ((1u32 << lanes) - 1) as u8,
                    v,
                );
            }
        }
    }
}

/// `out[k] = rows[k] . v`, with `rows` packed row-major.
fn dot_rows(rows: &[f64], v: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        {
            // SAFETY: the CPU supports the features this copy is compiled for.
            unsafe { dot_rows_fma(rows, v, out) };
            return;
        }
    }
    dot_rows_generic::<false>(rows, v, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_rows_fma(rows: &[f64], v: &[f64], out: &mut [f64]) {
    dot_rows_generic::<true>(rows, v, out);
}

#[inline(always)]
fn dot_rows_generic<const FUSED: bool>(rows: &[f64], v: &[f64], out: &mut [f64]) {
    const LANES: usize = 8;
    let madd = |acc: f64, a: f64, b: f64| {
        if FUSED {
            a.mul_add(b, acc)
        } else {
            acc + a * b
        }
    };
    let n = v.len();
    let main = n - n % LANES;
    let mut blocks = rows.chunks_exact(4 * n);
    let mut outs = out.chunks_exact_mut(4);
    for (block, dst) in (&mut blocks).zip(&mut outs) {
        let (r0, rest) = block.split_at(n);
        let (r1, rest) = rest.split_at(n);
        let (r2, r3) = rest.split_at(n);
        let mut acc = [[0.0; LANES]; 4];
        let lanes = v
            .chunks_exact(LANES)
            .zip(r0.chunks_exact(LANES))
            .zip(r1.chunks_exact(LANES))
            .zip(r2.chunks_exact(LANES))
            .zip(r3.chunks_exact(LANES));
        for ((((x, a), b), c), d) in lanes {
            for k in 0..LANES {
                acc[0][k] = madd(acc[0][k], a[k], x[k]);
                acc[1][k] = madd(acc[1][k], b[k], x[k]);
                acc[2][k] = madd(acc[2][k], c[k], x[k]);
                acc[3][k] = madd(acc[3][k], d[k], x[k]);
            }
        }
        for ((row, a), o) in [r0, r1, r2, r3].into_iter().zip(&acc).zip(dst) {
            let tail: f64 = row[main..].iter().zip(&v[main..]).map(|(p, q)| p * q).sum();
            *o = a.iter().sum::<f64>() + tail;
        }
    }
    for (row, o) in blocks
        .remainder()
        .chunks_exact(n)
        .zip(outs.into_remainder())
    {
        *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
    }
}
