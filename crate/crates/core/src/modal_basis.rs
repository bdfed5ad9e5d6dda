//! Free-plate eigenmodes on a rectangular pixel grid.
//!
//! The stiffness operator is assembled from the bending energy of a discrete
//! plate with free edges,
//!
//! ```text
//! E(w) = sum (w_xx)^2 + sum (w_yy)^2 + 2 sum (w_xy)^2
//! ```
//!
//! where each sum runs over the positions at which the corresponding finite
//! difference fits inside the grid. The resulting matrix reproduces the
//! 13-point biharmonic stencil (20, -8, 2, 1) in the interior, is symmetric
//! positive semi-definite, and its null space is exactly the affine functions
//! (piston plus the two tilts). The mass matrix is the identity.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Bumped whenever the discretization changes; part of the basis cache key.
pub const STENCIL_VERSION: u32 = 1;

/// Default relative eigenvalue gap under which consecutive modes are congruent.
pub const DEFAULT_PAIRING_TOL: f64 = 1e-6;

/// Eigenvalues at or below this are rigid-body modes.
pub const RIGID_EIGENVALUE_TOL: f64 = 1e-12;

/// Largest accepted `||K q - mu q||_inf / max(mu, 1)` for a returned mode.
pub const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of pixels, i.e. the operator dimension.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// The plate operator `M^-1 K` (with `M = I`).
#[derive(Debug, Clone)]
pub struct DynamicOperator {
    matrix: DMatrix<f64>,
    grid: GridSpec,
}

impl DynamicOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Assembles the free-plate bending operator for `grid`.
pub fn build_operator(grid: GridSpec) -> DynamicOperator {
    let n = grid.len();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let mut add_term = |taps: &[(usize, f64)], weight: f64| {
        for &(a, ca) in taps {
            for &(b, cb) in taps {
                k[(a, b)] += weight * ca * cb;
            }
        }
    };
    let (rows, cols) = (grid.rows, grid.cols);
    for r in 0..rows {
        for c in 1..cols - 1 {
            add_term(
                &[
                    (grid.index(r, c - 1), 1.0),
                    (grid.index(r, c), -2.0),
                    (grid.index(r, c + 1), 1.0),
                ],
                1.0,
            );
        }
    }
    for r in 1..rows - 1 {
        for c in 0..cols {
            add_term(
                &[
                    (grid.index(r - 1, c), 1.0),
                    (grid.index(r, c), -2.0),
                    (grid.index(r + 1, c), 1.0),
                ],
                1.0,
            );
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            add_term(
                &[
                    (grid.index(r, c), 1.0),
                    (grid.index(r, c + 1), -1.0),
                    (grid.index(r + 1, c), -1.0),
                    (grid.index(r + 1, c + 1), 1.0),
                ],
                2.0,
            );
        }
    }
    DynamicOperator { matrix: k, grid }
}

/// Infinity-normalized plate eigenmodes, ascending by eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    modes: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    groups: Vec<Range<usize>>,
    grid: GridSpec,
}

impl ModalBasis {
    /// Wraps precomputed modes. Groups start out as singletons; call
    /// [`classify_modes`] to detect congruent modes.
    pub fn from_parts(modes: DMatrix<f64>, eigenvalues: Vec<f64>, grid: GridSpec) -> Result<Self> {
        if modes.nrows() != grid.len() || modes.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{} mode matrix", grid.len(), eigenvalues.len()),
                got: format!("{}x{}", modes.nrows(), modes.ncols()),
            });
        }
        let groups = (0..eigenvalues.len()).map(|i| i..i + 1).collect();
        Ok(Self {
            modes,
            eigenvalues,
            groups,
            grid,
        })
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> DVector<f64> {
        self.modes.column(index).into_owned()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Degeneracy groups as contiguous mode index ranges, in ascending
    /// eigenvalue order.
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Keeps the first `n_q` modes; a group cut by the truncation keeps only
    /// its retained members.
    pub fn truncated(&self, n_q: usize) -> Result<Self> {
        if n_q > self.len() {
            return Err(Error::TooManyModes {
                requested: n_q,
                available: self.len(),
            });
        }
        let groups = self
            .groups
            .iter()
            .filter(|g| g.start < n_q)
            .map(|g| g.start..g.end.min(n_q))
            .collect();
        Ok(Self {
            modes: self.modes.columns(0, n_q).into_owned(),
            eigenvalues: self.eigenvalues[..n_q].to_vec(),
            groups,
            grid: self.grid,
        })
    }

    /// Smallest mode count whose leading groups are complete and number at
    /// least `n_groups`.
    pub fn modes_for_groups(&self, n_groups: usize) -> Option<usize> {
        if n_groups == 0 {
            return Some(0);
        }
        self.groups.get(n_groups - 1).map(|g| g.end)
    }
}

/// Solves for the `n_q` lowest modes of `op`.
///
/// Rigid-body modes (piston, column tilt, row tilt) are inserted analytically
/// with eigenvalue exactly zero. Degenerate eigenspaces are given a canonical
/// basis adapted to the grid's mirror symmetries; on square grids congruent
/// pairs are chosen as quarter turns of each other so they share a scale.
/// Each mode is then scaled to unit infinity norm with its first maximal
/// entry positive.
pub fn solve_modes(op: &DynamicOperator, n_q: usize) -> Result<ModalBasis> {
    let grid = op.grid;
    let n = grid.len();
    if n_q > n {
        return Err(Error::TooManyModes {
            requested: n_q,
            available: n,
        });
    }

    let eig = SymmetricEigen::new(op.matrix.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let symmetry = Symmetry::new(grid);
    let mut modes: Vec<(f64, DVector<f64>)> =
        rigid_modes(grid).into_iter().map(|v| (0.0, v)).collect();

    // The three smallest eigenpairs span the affine null space, replaced above.
    let bending = &order[RIGID_MODE_COUNT..];
    let mut start = 0;
    while start < bending.len() {
        let mut end = start + 1;
        while end < bending.len()
            && within_tol(
                eig.eigenvalues[bending[end - 1]],
                eig.eigenvalues[bending[end]],
                DEFAULT_PAIRING_TOL,
            )
        {
            end += 1;
        }
        let block: Vec<DVector<f64>> = bending[start..end]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if block.len() == 1 {
            let v = block.into_iter().next().unwrap_or_else(|| unreachable!());
            let mu = rayleigh(&op.matrix, &v);
            modes.push((mu, v));
        } else {
            modes.extend(canonicalize_block(&op.matrix, &symmetry, block));
        }
        start = end;
    }

    modes.sort_by(|a, b| a.0.total_cmp(&b.0));
    modes.truncate(n_q);

    let mut matrix = DMatrix::<f64>::zeros(n, n_q);
    let mut eigenvalues = Vec::with_capacity(n_q);
    for (j, (mu, v)) in modes.into_iter().enumerate() {
        let q = normalize_mode(v);
        let residual = mode_residual(op, &q, mu);
        if !(residual <= RESIDUAL_TOL) {
            return Err(Error::EigenSolve { mode: j, residual });
        }
        matrix.set_column(j, &q);
        eigenvalues.push(mu.max(0.0));
    }
    let basis = ModalBasis::from_parts(matrix, eigenvalues, grid)?;
    Ok(classify_modes(basis, DEFAULT_PAIRING_TOL))
}

/// `||op q - mu q||_inf / max(mu, 1)`.
pub fn mode_residual(op: &DynamicOperator, q: &DVector<f64>, mu: f64) -> f64 {
    let kq = &op.matrix * q;
    let worst = kq
        .iter()
        .zip(q.iter())
        .fold(0.0_f64, |m, (a, b)| m.max((a - mu * b).abs()));
    worst / mu.max(1.0)
}

/// Groups consecutive modes whose eigenvalues lie within `rel_tol` of each
/// other. Rigid-body modes are grouped structurally: the piston is simple,
/// and the two tilts form a congruent pair on square grids only.
pub fn classify_modes(mut basis: ModalBasis, rel_tol: f64) -> ModalBasis {
    let mut groups: Vec<Range<usize>> = Vec::new();
    let mut i = 0;
    let n = basis.len();
    let mut tilts = Vec::new();
    while i < n && basis.eigenvalues[i] <= RIGID_EIGENVALUE_TOL {
        if is_constant(&basis.modes.column(i).into_owned()) {
            groups.push(i..i + 1);
        } else {
            tilts.push(i);
        }
        i += 1;
    }
    if basis.grid.is_square() && tilts.len() == 2 && tilts[1] == tilts[0] + 1 {
        groups.push(tilts[0]..tilts[1] + 1);
    } else {
        groups.extend(tilts.into_iter().map(|t| t..t + 1));
    }
    groups.sort_by_key(|g| g.start);

    while i < n {
        let start = i;
        i += 1;
        while i < n && within_tol(basis.eigenvalues[i - 1], basis.eigenvalues[i], rel_tol) {
            i += 1;
        }
        groups.push(start..i);
    }
    basis.groups = groups;
    basis
}

fn within_tol(a: f64, b: f64, rel_tol: f64) -> bool {
    (b - a).abs() <= rel_tol * a.abs().max(b.abs())
}

fn is_constant(v: &DVector<f64>) -> bool {
    v.max() - v.min() <= 1e-12
}

const RIGID_MODE_COUNT: usize = 3;

fn rigid_modes(grid: GridSpec) -> [DVector<f64>; RIGID_MODE_COUNT] {
    let n = grid.len();
    let half_c = (grid.cols - 1) as f64 / 2.0;
    let half_r = (grid.rows - 1) as f64 / 2.0;
    let piston = DVector::from_element(n, 1.0);
    let tilt_cols = DVector::from_fn(n, |i, _| (i % grid.cols) as f64 - half_c);
    let tilt_rows = DVector::from_fn(n, |i, _| (i / grid.cols) as f64 - half_r);
    [piston, tilt_cols, tilt_rows].map(|v| {
        let norm = v.norm();
        v / norm
    })
}

fn rayleigh(k: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (k * v).dot(v) / v.dot(v)
}

/// Scales to unit infinity norm and makes the first maximal entry positive.
fn normalize_mode(v: DVector<f64>) -> DVector<f64> {
    let max = v.amax();
    let mut q = v / max;
    let lead = q.iter().position(|x| x.abs() >= 1.0 - 1e-9).unwrap_or(0);
    if q[lead] < 0.0 {
        q.neg_mut();
    }
    q
}

/// Index permutations for the grid's mirror and quarter-turn symmetries.
struct Symmetry {
    mirror_cols: Vec<usize>,
    mirror_rows: Vec<usize>,
    quarter_turn: Option<Vec<usize>>,
}

impl Symmetry {
    fn new(grid: GridSpec) -> Self {
        let (rows, cols) = (grid.rows, grid.cols);
        let mirror_cols = (0..grid.len())
            .map(|i| grid.index(i / cols, cols - 1 - i % cols))
            .collect();
        let mirror_rows = (0..grid.len())
            .map(|i| grid.index(rows - 1 - i / cols, i % cols))
            .collect();
        // Clockwise: out[r][c] = in[n-1-c][r], matching `dataset::rotate90`.
        let quarter_turn = grid.is_square().then(|| {
            (0..grid.len())
                .map(|i| grid.index(rows - 1 - i % cols, i / cols))
                .collect()
        });
        Self {
            mirror_cols,
            mirror_rows,
            quarter_turn,
        }
    }

    fn permute(perm: &[usize], v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(perm.len(), perm.iter().map(|&p| v[p]))
    }

    /// Projects onto functions with the given parity under the column and
    /// row mirrors (`+1` even, `-1` odd).
    fn parity(&self, v: &DVector<f64>, col_sign: f64, row_sign: f64) -> DVector<f64> {
        let mc = Self::permute(&self.mirror_cols, v);
        let mr = Self::permute(&self.mirror_rows, v);
        let mrc = Self::permute(&self.mirror_rows, &mc);
        (v + mc * col_sign + mr * row_sign + mrc * (col_sign * row_sign)) * 0.25
    }

    fn turn(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        self.quarter_turn.as_deref().map(|p| Self::permute(p, v))
    }
}

/// Orthonormal basis of `range(P V)` for an orthogonal projector `P` that
/// maps the span of `block` into itself.
fn projected_subspace(
    block: &[DVector<f64>],
    project: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Vec<DVector<f64>> {
    let k = block.len();
    let projected: Vec<DVector<f64>> = block.iter().map(&project).collect();
    let gram = DMatrix::from_fn(k, k, |a, b| block[a].dot(&projected[b]));
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram);
    let mut out = Vec::new();
    for j in 0..k {
        if eig.eigenvalues[j] > 0.5 {
            let mut w = DVector::zeros(block[0].len());
            for (a, p) in projected.iter().enumerate() {
                w.axpy(eig.eigenvectors[(a, j)], p, 1.0);
            }
            out.push(w);
        }
    }
    gram_schmidt(out)
}

fn gram_schmidt(vs: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        for u in &out {
            let d = u.dot(&v);
            v.axpy(-d, u, 1.0);
        }
        let norm = v.norm();
        out.push(v / norm);
    }
    out
}

/// Eigenvectors of `k` restricted to the span of the orthonormal `basis`,
/// ascending by eigenvalue.
fn rediagonalize(k: &DMatrix<f64>, basis: Vec<DVector<f64>>) -> Vec<(f64, DVector<f64>)> {
    if basis.len() == 1 {
        let v = basis.into_iter().next().unwrap_or_else(|| unreachable!());
        return vec![(rayleigh(k, &v), v)];
    }
    let m = basis.len();
    let kb: Vec<DVector<f64>> = basis.iter().map(|b| k * b).collect();
    let small = DMatrix::from_fn(m, m, |a, b| {
        0.5 * (basis[a].dot(&kb[b]) + basis[b].dot(&kb[a]))
    });
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vecs: Vec<DVector<f64>> = order
        .iter()
        .map(|&j| {
            let mut w = DVector::zeros(basis[0].len());
            for (a, b) in basis.iter().enumerate() {
                w.axpy(eig.eigenvectors[(a, j)], b, 1.0);
            }
            w
        })
        .collect();
    gram_schmidt(vecs)
        .into_iter()
        .map(|v| (rayleigh(k, &v), v))
        .collect()
}

/// Splits a degenerate eigenspace into symmetry-adapted eigenvectors.
fn canonicalize_block(
    k: &DMatrix<f64>,
    symmetry: &Symmetry,
    block: Vec<DVector<f64>>,
) -> Vec<(f64, DVector<f64>)> {
    let dim = block.len();
    let mut out: Vec<(f64, DVector<f64>)> = Vec::with_capacity(dim);

    if symmetry.quarter_turn.is_some() {
        let turn = |v: &DVector<f64>| symmetry.turn(v).unwrap_or_else(|| v.clone());
        // Even/even and odd/odd parities are invariant under a half turn, so
        // the quarter turn acts there as +1 or -1.
        for (cs, rs) in [(1.0, 1.0), (-1.0, -1.0)] {
            for turn_sign in [1.0, -1.0] {
                let sub = projected_subspace(&block, |v| {
                    let p = symmetry.parity(v, cs, rs);
                    (&p + turn(&p) * turn_sign) * 0.5
                });
                if !sub.is_empty() {
                    out.extend(rediagonalize(k, sub));
                }
            }
        }
        // Mixed parities carry the congruent pairs: each even/odd mode is
        // matched with its quarter turn, which is odd/even.
        let mixed = projected_subspace(&block, |v| symmetry.parity(v, 1.0, -1.0));
        if !mixed.is_empty() {
            for (mu, u) in rediagonalize(k, mixed) {
                let partner = turn(&u);
                out.push((mu, u));
                out.push((mu, partner));
            }
        }
    } else {
        for (cs, rs) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let sub = projected_subspace(&block, |v| symmetry.parity(v, cs, rs));
            if !sub.is_empty() {
                out.extend(rediagonalize(k, sub));
            }
        }
    }

    if out.len() != dim {
        // Symmetry split failed to account for the whole block; keep the
        // solver's own basis.
        return block.into_iter().map(|v| (rayleigh(k, &v), v)).collect();
    }
    out
}
