//! On-disk cache of solved modal bases.
//!
//! A file holds four little-endian `u32` values (rows, cols, mode count,
//! stencil version), then the eigenvalues and the column-major mode matrix
//! as little-endian `f64`. Groups are recomputed on load with the same
//! classification the solver applies, so a cached basis equals a fresh one.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::modal_basis::{
    build_operator, classify_modes, solve_modes, GridSpec, ModalBasis, DEFAULT_PAIRING_TOL,
    STENCIL_VERSION,
};

const WHAT: &str = "basis cache";

fn format_error(message: impl Into<String>) -> Error {
    Error::Format {
        what: WHAT,
        message: message.into(),
    }
}

pub fn write_basis<W: Write>(basis: &ModalBasis, mut out: W) -> std::io::Result<()> {
    let grid = basis.grid();
    for field in [grid.rows(), grid.cols(), basis.len()] {
        let field = u32::try_from(field).map_err(std::io::Error::other)?;
        out.write_all(&field.to_le_bytes())?;
    }
    out.write_all(&STENCIL_VERSION.to_le_bytes())?;
    for v in basis.eigenvalues().iter().chain(basis.modes().iter()) {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

/// Reads a basis written by [`write_basis`] with the current stencil.
pub fn read_basis<R: Read>(mut input: R) -> Result<ModalBasis> {
    let mut word = [0u8; 4];
    let mut header = [0usize; 4];
    for field in &mut header {
        input
            .read_exact(&mut word)
            .map_err(|_| format_error("truncated header"))?;
        *field = u32::from_le_bytes(word) as usize;
    }
    let [rows, cols, n_q, version] = header;
    if version != STENCIL_VERSION as usize {
        return Err(format_error(format!(
            "stencil version {version}, expected {STENCIL_VERSION}"
        )));
    }
    let grid = GridSpec::new(rows, cols)?;
    if n_q > grid.len() {
        return Err(format_error(format!("{n_q} modes on a {rows}x{cols} grid")));
    }
    let mut values = vec![0.0; n_q * (1 + grid.len())];
    let mut bytes = [0u8; 8];
    for v in &mut values {
        input
            .read_exact(&mut bytes)
            .map_err(|_| format_error("truncated data"))?;
        *v = f64::from_le_bytes(bytes);
    }
    if input
        .read(&mut bytes)
        .map_err(|e| format_error(e.to_string()))?
        != 0
    {
        return Err(format_error("trailing bytes"));
    }
    let modes = DMatrix::from_vec(grid.len(), n_q, values.split_off(n_q));
    let basis = ModalBasis::from_parts(modes, values, grid)?;
    Ok(classify_modes(basis, DEFAULT_PAIRING_TOL))
}

pub fn save_basis(path: impl AsRef<Path>, basis: &ModalBasis) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_basis(basis, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<ModalBasis> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_basis(BufReader::new(file))
}

/// File name keyed by grid, mode count and stencil version.
pub fn cache_file_name(grid: GridSpec, n_q: usize) -> String {
    format!(
        "plate_{}x{}_q{}_v{}.basis",
        grid.rows(),
        grid.cols(),
        n_q,
        STENCIL_VERSION
    )
}

/// Loads the basis from `dir` when a valid cache file exists; otherwise
/// solves it and writes the file.
pub fn cached_solve(dir: impl AsRef<Path>, grid: GridSpec, n_q: usize) -> Result<ModalBasis> {
    let dir = dir.as_ref();
    let path = dir.join(cache_file_name(grid, n_q));
    if let Ok(basis) = load_basis(&path) {
        if basis.grid() == grid && basis.len() == n_q {
            return Ok(basis);
        }
    }
    let basis = solve_modes(&build_operator(grid), n_q)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Written under a temporary name so readers never see a partial file.
    let partial: PathBuf = path.with_extension(format!("partial{}", std::process::id()));
    save_basis(&partial, &basis)?;
    fs::rename(&partial, &path).map_err(|e| Error::io(&path, e))?;
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let grid = GridSpec::square(6).unwrap();
        let basis = solve_modes(&build_operator(grid), 20).unwrap();
        let mut buf = Vec::new();
        write_basis(&basis, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 20 * 37);
        assert_eq!(&buf[..4], &6u32.to_le_bytes());
        let back = read_basis(buf.as_slice()).unwrap();
        assert_eq!(back.modes(), basis.modes());
        assert_eq!(back.eigenvalues(), basis.eigenvalues());
        assert_eq!(back.groups(), basis.groups());
    }

    #[test]
    fn corrupt_or_stale_files_are_rejected() {
        let grid = GridSpec::square(4).unwrap();
        let basis = solve_modes(&build_operator(grid), 5).unwrap();
        let mut buf = Vec::new();
        write_basis(&basis, &mut buf).unwrap();
        assert!(read_basis(&buf[..buf.len() - 1]).is_err());
        let mut stale = buf.clone();
        stale[12..16].copy_from_slice(&(STENCIL_VERSION + 1).to_le_bytes());
        assert!(read_basis(stale.as_slice()).is_err());
        buf.push(0);
        assert!(read_basis(buf.as_slice()).is_err());
    }

    #[test]
    fn cached_solve_matches_a_fresh_solve() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridSpec::new(5, 6).unwrap();
        let first = cached_solve(dir.path(), grid, 12).unwrap();
        assert!(dir.path().join(cache_file_name(grid, 12)).exists());
        let second = cached_solve(dir.path(), grid, 12).unwrap();
        let fresh = solve_modes(&build_operator(grid), 12).unwrap();
        for b in [&first, &second] {
            assert_eq!(b.modes(), fresh.modes());
            assert_eq!(b.eigenvalues(), fresh.eigenvalues());
            assert_eq!(b.groups(), fresh.groups());
        }
    }
}
