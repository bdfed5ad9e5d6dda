//! Projection of images onto a modal basis and the full-scale modal features.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::feature::{FeatureExtractor, FeatureVector};
use crate::image_buffer::ImageBuffer;
use crate::modal_basis::{build_operator, solve_modes, GridSpec, ModalBasis};

mod fold;

use fold::FoldedDual;

/// Precomputed dual basis `(Q^T Q)^-1 Q^T`.
#[derive(Debug, Clone)]
pub struct DualProjector {
    basis: ModalBasis,
    dual: DMatrix<f64>,
    folded: Option<FoldedDual>,
}

/// Modal coordinates of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSpectrum {
    pub lambda: Vec<f64>,
    /// `||P_V - Q lambda||_inf`.
    pub residual_norm: f64,
}

/// One amplitude per degeneracy group, plus a phase for each congruent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSpectrum {
    pub amplitudes: Vec<f64>,
    /// `Some(atan2(lambda_{i+1}, lambda_i))` for groups of exactly two modes.
    pub phases: Vec<Option<f64>>,
}

pub fn build_projector(basis: ModalBasis) -> Result<DualProjector> {
    let q = basis.modes();
    let gram = q.transpose() * q;
    let chol = gram.clone().cholesky().ok_or(Error::SingularBasis)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(Error::SingularBasis);
    }
    let dual = chol.solve(&q.transpose());
    let folded = FoldedDual::new(&dual, basis.grid());
    Ok(DualProjector {
        basis,
        dual,
        folded,
    })
}

impl DualProjector {
    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    /// `N_q x (rows*cols)` dual matrix.
    pub fn dual(&self) -> &DMatrix<f64> {
        &self.dual
    }

    /// Modal coordinates of a flattened row-major image, without the
    /// residual.
    pub fn coordinates(&self, pixels: &[f64]) -> DVector<f64> {
        match &self.folded {
            Some(folded) => DVector::from_vec(folded.apply(pixels)),
            None => &self.dual * DVectorView::from_slice(pixels, pixels.len()),
        }
    }

    /// Coordinates of several flattened images, one column per image.
    pub fn coordinates_batch(&self, images: &[&[f64]]) -> DMatrix<f64> {
        match &self.folded {
            Some(folded) => folded.apply_batch(images),
            None => {
                let n = self.basis.grid().len();
                let mut stack = DMatrix::zeros(n, images.len());
                for (j, pixels) in images.iter().enumerate() {
                    stack.column_mut(j).copy_from_slice(pixels);
                }
                &self.dual * stack
            }
        }
    }

    /// Same coordinates as [`Self::coordinates_batch`], handed to
    /// `visit(j, lambda)` one image at a time.
    pub fn for_each_coordinates(&self, images: &[&[f64]], mut visit: impl FnMut(usize, &[f64])) {
        match &self.folded {
            Some(folded) => folded.for_each(images, visit),
            None => {
                let lambda = self.coordinates_batch(images);
                for (j, col) in lambda.column_iter().enumerate() {
                    visit(j, col.as_slice());
                }
            }
        }
    }

    pub fn project(&self, image: &ImageBuffer) -> Result<ModalSpectrum> {
        let grid = self.basis.grid();
        image.ensure_shape(grid.rows(), grid.cols())?;
        let lambda = self.coordinates(image.pixels());
        let fitted = self.basis.modes() * &lambda;
        let residual_norm = image
            .pixels()
            .iter()
            .zip(fitted.iter())
            .fold(0.0_f64, |m, (p, f)| m.max((p - f).abs()));
        Ok(ModalSpectrum {
            lambda: lambda.as_slice().to_vec(),
            residual_norm,
        })
    }
}

/// `sum_{i in subset} lambda_i Q_i`, reshaped to the basis grid. Indices are
/// zero-based.
pub fn reconstruct(basis: &ModalBasis, lambda: &[f64], subset: &[usize]) -> Result<ImageBuffer> {
    if lambda.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} coordinates", basis.len()),
            got: format!("{}", lambda.len()),
        });
    }
    let grid = basis.grid();
    let mut out = DVector::<f64>::zeros(grid.len());
    for &i in subset {
        if i >= basis.len() {
            return Err(Error::ModeIndex {
                index: i,
                len: basis.len(),
            });
        }
        out.axpy(lambda[i], &basis.modes().column(i), 1.0);
    }
    ImageBuffer::new(grid.rows(), grid.cols(), out.as_slice().to_vec())
}

/// Collapses each degeneracy group to the L2 norm of its coordinates.
pub fn rotation_invariant(spectrum: &ModalSpectrum, basis: &ModalBasis) -> InvariantSpectrum {
    invariant_from_groups(&spectrum.lambda, basis.groups())
}

fn invariant_from_groups(lambda: &[f64], groups: &[Range<usize>]) -> InvariantSpectrum {
    let mut amplitudes = Vec::with_capacity(groups.len());
    let mut phases = Vec::with_capacity(groups.len());
    for g in groups {
        let coords = &lambda[g.clone()];
        amplitudes.push(coords.iter().map(|v| v * v).sum::<f64>().sqrt());
        phases.push(match coords {
            [a, b] => Some(b.atan2(*a)),
            _ => None,
        });
    }
    InvariantSpectrum { amplitudes, phases }
}

/// Splits `image` into the reconstruction over the first `cutoff` modes and
/// the remainder (which includes the projection residual).
pub fn multiscale_filter(
    projector: &DualProjector,
    image: &ImageBuffer,
    cutoff: usize,
) -> Result<(ImageBuffer, ImageBuffer)> {
    let basis = projector.basis();
    if cutoff == 0 || cutoff > basis.len() {
        return Err(Error::ModeIndex {
            index: cutoff,
            len: basis.len(),
        });
    }
    let grid = basis.grid();
    image.ensure_shape(grid.rows(), grid.cols())?;
    let lambda = projector.coordinates(image.pixels());
    let subset: Vec<usize> = (0..cutoff).collect();
    let low = reconstruct(basis, lambda.as_slice(), &subset)?;
    let high_pixels = image
        .pixels()
        .iter()
        .zip(low.pixels())
        .map(|(p, l)| p - l)
        .collect();
    let high = ImageBuffer::new(grid.rows(), grid.cols(), high_pixels)?;
    Ok((low, high))
}

/// The first `n_features` invariant amplitudes of `image`.
pub fn full_scale_features(
    projector: &DualProjector,
    image: &ImageBuffer,
    n_features: usize,
) -> Result<FeatureVector> {
    let extractor = FullScaleDmd::from_projector(projector.clone(), n_features)?;
    extractor.extract(image)
}

/// Full-scale modal feature extractor with its dual basis prepared.
#[derive(Debug, Clone)]
pub struct FullScaleDmd {
    projector: DualProjector,
    n_features: usize,
    name: String,
}

impl FullScaleDmd {
    /// Solves the full basis for `grid` and keeps just enough complete
    /// groups to yield `n_features` amplitudes.
    pub fn new(grid: GridSpec, n_features: usize) -> Result<Self> {
        let basis = solve_modes(&build_operator(grid), grid.len())?;
        Self::from_basis(basis, n_features)
    }

    pub fn from_basis(basis: ModalBasis, n_features: usize) -> Result<Self> {
        let n_q = basis
            .modes_for_groups(n_features)
            .ok_or(Error::InsufficientModes {
                requested: n_features,
                available: basis.groups().len(),
            })?;
        Self::from_projector(build_projector(basis.truncated(n_q)?)?, n_features)
    }

    /// Uses an existing projector; its leading `n_features` groups must be
    /// complete in the basis.
    pub fn from_projector(projector: DualProjector, n_features: usize) -> Result<Self> {
        let available = projector.basis().groups().len();
        if n_features == 0 || n_features > available {
            return Err(Error::InsufficientModes {
                requested: n_features,
                available,
            });
        }
        Ok(Self {
            projector,
            n_features,
            name: "fs_dmd".to_string(),
        })
    }

    pub fn projector(&self) -> &DualProjector {
        &self.projector
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn amplitudes(&self, lambda: &[f64]) -> Vec<f64> {
        self.projector.basis().groups()[..self.n_features]
            .iter()
            .map(|g| match &lambda[g.clone()] {
                [a] => a.abs(),
                [a, b] => (a * a + b * b).sqrt(),
                many => many.iter().map(|v| v * v).sum::<f64>().sqrt(),
            })
            .collect()
    }
}

impl FeatureExtractor for FullScaleDmd {
    fn name(&self) -> &str {
        &self.name
    }

    fn compute(&self, image: &ImageBuffer) -> Result<Vec<f64>> {
        let grid = self.projector.basis().grid();
        image.ensure_shape(grid.rows(), grid.cols())?;
        let lambda = self.projector.coordinates(image.pixels());
        Ok(self.amplitudes(lambda.as_slice()))
    }

    fn compute_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<f64>>> {
        let grid = self.projector.basis().grid();
        for image in images {
            image.ensure_shape(grid.rows(), grid.cols())?;
        }
        let pixels: Vec<&[f64]> = images.iter().map(ImageBuffer::pixels).collect();
        let mut features = Vec::with_capacity(images.len());
        self.projector
            .for_each_coordinates(&pixels, |_, lambda| features.push(self.amplitudes(lambda)));
        Ok(features)
    }
}
