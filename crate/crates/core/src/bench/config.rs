//! Experiment configuration: a flat TOML file of `key = value` lines.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dataset::SplitSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        classes: usize,
        images_per_class: usize,
        size: usize,
    },
    /// `<root>/<class>/*.pgm|*.png`.
    Directory(PathBuf),
}

impl DatasetSource {
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synthetic { .. } => "synthetic".into(),
            DatasetSource::Directory(root) => root
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| root.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorSpec {
    FsDmd { features: usize },
    Haralick { levels: usize },
    Lbp { neighbors: usize, radius: usize },
    Hog { cell: usize, bins: usize },
    FilteringDmd,
    Dct3,
}

impl ExtractorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExtractorSpec::FsDmd { .. } => "fs_dmd",
            ExtractorSpec::Haralick { .. } => "haralick",
            ExtractorSpec::Lbp { .. } => "lbp",
            ExtractorSpec::Hog { .. } => "hog",
            ExtractorSpec::FilteringDmd => "filtering_dmd",
            ExtractorSpec::Dct3 => "dct3",
        }
    }
}

pub const EXTRACTOR_NAMES: [&str; 6] =
    ["fs_dmd", "haralick", "lbp", "hog", "filtering_dmd", "dct3"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub extractors: Vec<ExtractorSpec>,
    pub split: SplitSpec,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Directory of cached modal bases, if any.
    pub basis_cache: Option<PathBuf>,
    /// Images per timed batch.
    pub timing_batch: usize,
    pub write_manifest: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    dataset: String,
    synthetic_classes: usize,
    synthetic_images_per_class: usize,
    synthetic_size: usize,
    extractors: Vec<String>,
    fs_dmd_features: usize,
    glcm_levels: usize,
    lbp_neighbors: usize,
    lbp_radius: usize,
    hog_cell: usize,
    hog_bins: usize,
    patches_per_class: usize,
    patch_size: usize,
    train: usize,
    test: usize,
    seed: u64,
    svm_c: f64,
    svm_epochs: usize,
    output_dir: String,
    basis_cache: Option<String>,
    timing_batch: usize,
    write_manifest: bool,
}

impl Default for RawConfig {
    fn default() -> Self {
        let split = SplitSpec::default();
        Self {
            dataset: "synthetic".into(),
            synthetic_classes: 8,
            synthetic_images_per_class: 1,
            synthetic_size: 256,
            extractors: EXTRACTOR_NAMES.iter().map(|s| s.to_string()).collect(),
            fs_dmd_features: 100,
            glcm_levels: crate::baseline::glcm::DEFAULT_LEVELS,
            lbp_neighbors: 8,
            lbp_radius: 1,
            hog_cell: 8,
            hog_bins: 9,
            patches_per_class: split.patches_per_class,
            patch_size: split.patch_size,
            train: split.train,
            test: split.test,
            seed: 0,
            svm_c: 1.0,
            svm_epochs: 200,
            output_dir: "bench-out".into(),
            basis_cache: None,
            timing_batch: 64,
            write_manifest: false,
        }
    }
}

fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidParameter(message.into())
}

impl ExperimentConfig {
    /// Reads a config file; relative paths in it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Format {
            what: "experiment config",
            message: e.to_string(),
        })?;
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let dataset = if raw.dataset == "synthetic" {
            DatasetSource::Synthetic {
                classes: raw.synthetic_classes,
                images_per_class: raw.synthetic_images_per_class,
                size: raw.synthetic_size,
            }
        } else {
            let root = resolve(&raw.dataset);
            if !root.is_dir() {
                return Err(invalid(format!(
                    "dataset directory {} does not exist",
                    root.display()
                )));
            }
            DatasetSource::Directory(root)
        };
        if raw.extractors.is_empty() {
            return Err(invalid("at least one extractor is required"));
        }
        let extractors = raw
            .extractors
            .iter()
            .map(|name| match name.as_str() {
                "fs_dmd" => Ok(ExtractorSpec::FsDmd {
                    features: raw.fs_dmd_features,
                }),
                "haralick" => Ok(ExtractorSpec::Haralick {
                    levels: raw.glcm_levels,
                }),
                "lbp" => Ok(ExtractorSpec::Lbp {
                    neighbors: raw.lbp_neighbors,
                    radius: raw.lbp_radius,
                }),
                "hog" => Ok(ExtractorSpec::Hog {
                    cell: raw.hog_cell,
                    bins: raw.hog_bins,
                }),
                "filtering_dmd" => Ok(ExtractorSpec::FilteringDmd),
                "dct3" => Ok(ExtractorSpec::Dct3),
                other => Err(invalid(format!(
                    "unknown extractor `{other}` (expected one of {})",
                    EXTRACTOR_NAMES.join(", ")
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let split = SplitSpec {
            patches_per_class: raw.patches_per_class,
            patch_size: raw.patch_size,
            train: raw.train,
            test: raw.test,
            seed: raw.seed,
        };
        split.validate()?;
        if !(raw.svm_c > 0.0 && raw.svm_c.is_finite()) {
            return Err(invalid(format!(
                "svm_c must be positive, got {}",
                raw.svm_c
            )));
        }
        if raw.svm_epochs == 0 || raw.timing_batch == 0 {
            return Err(invalid("svm_epochs and timing_batch must be positive"));
        }
        Ok(Self {
            dataset,
            extractors,
            split,
            svm_c: raw.svm_c,
            svm_epochs: raw.svm_epochs,
            seed: raw.seed,
            output_dir: resolve(&raw.output_dir),
            basis_cache: raw
                .basis_cache
                .as_deref()
                .filter(|s| !s.is_empty())
                .map(resolve),
            timing_batch: raw.timing_batch,
            write_manifest: raw.write_manifest,
        })
    }

    /// Resolved settings as `key=value` pairs, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match &self.dataset {
            DatasetSource::Synthetic {
                classes,
                images_per_class,
                size,
            } => {
                push("dataset", "synthetic".into());
                push("synthetic_classes", classes.to_string());
                push("synthetic_images_per_class", images_per_class.to_string());
                push("synthetic_size", size.to_string());
            }
            DatasetSource::Directory(root) => push("dataset", root.display().to_string()),
        }
        let names: Vec<&str> = self.extractors.iter().map(ExtractorSpec::name).collect();
        push("extractors", names.join(" "));
        for spec in &self.extractors {
            match *spec {
                ExtractorSpec::FsDmd { features } => push("fs_dmd_features", features.to_string()),
                ExtractorSpec::Haralick { levels } => push("glcm_levels", levels.to_string()),
                ExtractorSpec::Lbp { neighbors, radius } => {
                    push("lbp_neighbors", neighbors.to_string());
                    push("lbp_radius", radius.to_string());
                }
                ExtractorSpec::Hog { cell, bins } => {
                    push("hog_cell", cell.to_string());
                    push("hog_bins", bins.to_string());
                }
                ExtractorSpec::FilteringDmd | ExtractorSpec::Dct3 => {}
            }
        }
        push(
            "patches_per_class",
            self.split.patches_per_class.to_string(),
        );
        push("patch_size", self.split.patch_size.to_string());
        push("train", self.split.train.to_string());
        push("test", self.split.test.to_string());
        push("seed", self.seed.to_string());
        push("svm_c", self.svm_c.to_string());
        push("svm_epochs", self.svm_epochs.to_string());
        push("timing_batch", self.timing_batch.to_string());
        out
    }
}
