//! Image loading, patch sampling, train/test splits and a catalogue of
//! synthetic stationary textures.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image_buffer::ImageBuffer;

#[derive(Debug, Clone)]
pub struct TextureClass {
    pub id: usize,
    pub label: String,
    pub images: Vec<ImageBuffer>,
}

impl TextureClass {
    pub fn new(id: usize, label: impl Into<String>, images: Vec<ImageBuffer>) -> Result<Self> {
        let label = label.into();
        if images.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "texture class `{label}` has no images"
            )));
        }
        Ok(Self { id, label, images })
    }
}

/// Patch counts per source image and per class, and the sampling seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub patches_per_class: usize,
    pub patch_size: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            patches_per_class: 540,
            patch_size: 32,
            train: 30,
            test: 510,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patches_per_class == 0 {
            return Err(Error::InvalidParameter(
                "patch size and patch count must be positive".into(),
            ));
        }
        if self.train == 0 || self.test == 0 {
            return Err(Error::InvalidParameter(
                "train and test counts must be positive".into(),
            ));
        }
        if self.train + self.test > self.patches_per_class {
            return Err(Error::InvalidParameter(format!(
                "train + test = {} exceeds {} patches per class",
                self.train + self.test,
                self.patches_per_class
            )));
        }
        Ok(())
    }
}

/// ChaCha8 stream `stream` of the generator seeded with `seed`.
fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Decodes an image to 8-bit gray levels; color is averaged over channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::ImageLoad {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (cols, rows) = (decoded.width() as usize, decoded.height() as usize);
    let pixels = if decoded.color().has_color() {
        decoded
            .to_rgb8()
            .pixels()
            .map(|p| p.0.iter().map(|&v| f64::from(v)).sum::<f64>() / 3.0)
            .collect()
    } else {
        decoded
            .to_luma8()
            .pixels()
            .map(|p| f64::from(p.0[0]))
            .collect()
    };
    Ok(ImageBuffer::new(rows, cols, pixels)?.with_source(path.display().to_string()))
}

/// One class per subdirectory of `root` (sorted by name), holding its
/// `.pgm` and `.png` files.
pub fn load_directory(root: impl AsRef<Path>) -> Result<Vec<TextureClass>> {
    let root = root.as_ref();
    let mut dirs: Vec<_> = read_dir(root)?.into_iter().filter(|p| p.is_dir()).collect();
    dirs.sort();
    let mut classes = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let mut files: Vec<_> = read_dir(&dir)?
            .into_iter()
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("png"))
            })
            .collect();
        files.sort();
        let images = files.iter().map(load_image).collect::<Result<Vec<_>>>()?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        classes.push(TextureClass::new(classes.len(), label, images)?);
    }
    if classes.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    Ok(classes)
}

fn read_dir(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect()
}

/// Uniform top-left corners (row, col), with repeats allowed.
fn sample_positions(
    image: &ImageBuffer,
    spec: &SplitSpec,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    let size = spec.patch_size;
    if image.rows() < size || image.cols() < size {
        return Err(Error::ImageTooSmall {
            rows: image.rows(),
            cols: image.cols(),
            min_rows: size,
            min_cols: size,
        });
    }
    let (max_row, max_col) = (image.rows() - size, image.cols() - size);
    Ok((0..spec.patches_per_class)
        .map(|_| (rng.random_range(0..=max_row), rng.random_range(0..=max_col)))
        .collect())
}

/// `patches_per_class` square patches at random positions, determined by
/// the image and the seed.
pub fn sample_patches(image: &ImageBuffer, spec: &SplitSpec) -> Result<Vec<ImageBuffer>> {
    sample_positions(image, spec, &mut rng(spec.seed, 0))?
        .into_iter()
        .map(|(r, c)| image.crop(r, c, spec.patch_size, spec.patch_size))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub class: usize,
    /// Index of the source image within its class.
    pub source: usize,
    pub row: usize,
    pub col: usize,
    pub image: ImageBuffer,
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub train: Vec<Patch>,
    pub test: Vec<Patch>,
}

impl Split {
    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().map(|p| p.class).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().map(|p| p.class).collect()
    }
}

/// Samples `patches_per_class` patches from every source image, then draws
/// disjoint train and test sets from each class's pool.
pub fn make_split(classes: &[TextureClass], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut split = Split::default();
    for class in classes {
        let mut pool = Vec::with_capacity(spec.patches_per_class * class.images.len());
        for (source, image) in class.images.iter().enumerate() {
            let stream = ((class.id as u64) << 32) | source as u64;
            for (row, col) in sample_positions(image, spec, &mut rng(spec.seed, stream))? {
                pool.push((source, row, col));
            }
        }
        if pool.len() < spec.train + spec.test {
            return Err(Error::InvalidParameter(format!(
                "class `{}` has {} patches, {} needed",
                class.label,
                pool.len(),
                spec.train + spec.test
            )));
        }
        let stream = ((class.id as u64) << 32) | u64::from(u32::MAX);
        pool.shuffle(&mut rng(spec.seed, stream));
        let mut patches = pool.into_iter().map(|(source, row, col)| -> Result<Patch> {
            Ok(Patch {
                class: class.id,
                source,
                row,
                col,
                image: class.images[source].crop(row, col, spec.patch_size, spec.patch_size)?,
            })
        });
        for patch in patches.by_ref().take(spec.train) {
            split.train.push(patch?);
        }
        for patch in patches.take(spec.test) {
            split.test.push(patch?);
        }
    }
    Ok(split)
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    class: &'a str,
    source: &'a str,
    x: usize,
    y: usize,
    split: &'static str,
}

/// CSV audit trail of every patch: class, source, x (column), y (row), split.
pub fn write_manifest<W: Write>(classes: &[TextureClass], split: &Split, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let sets = [("train", &split.train), ("test", &split.test)];
    for (name, patches) in sets {
        for p in patches {
            let class = classes.iter().find(|c| c.id == p.class).ok_or_else(|| {
                Error::InvalidParameter(format!("patch of unknown class {}", p.class))
            })?;
            writer.serialize(ManifestRow {
                class: &class.label,
                source: class.images[p.source].source(),
                x: p.col,
                y: p.row,
                split: name,
            })?;
        }
    }
    writer.flush().map_err(|e| Error::io("manifest", e))?;
    Ok(())
}

/// Clockwise rotation by `k` quarter turns.
pub fn rotate90(image: &ImageBuffer, k: u32) -> Result<ImageBuffer> {
    let (rows, cols) = (image.rows(), image.cols());
    let k = k % 4;
    if k % 2 == 1 && rows != cols {
        return Err(Error::DimensionMismatch {
            expected: "a square image for an odd number of quarter turns".into(),
            got: format!("{rows}x{cols}"),
        });
    }
    let src = |r: usize, c: usize| match k {
        0 => image.get(r, c),
        1 => image.get(rows - 1 - c, r),
        2 => image.get(rows - 1 - r, cols - 1 - c),
        _ => image.get(c, cols - 1 - r),
    };
    Ok(ImageBuffer::from_fn(rows, cols, src).with_source(image.source()))
}

/// The synthetic texture families, in catalogue order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureFamily {
    /// Sinusoid with the given period in pixels, at 0 or 45 degrees.
    Grating {
        period: usize,
        diagonal: bool,
    },
    Checkerboard,
    BlurredNoise,
    SparseDots,
    JitteredStripes,
}

pub const CATALOGUE: [TextureFamily; 8] = [
    TextureFamily::Grating {
        period: 16,
        diagonal: false,
    },
    TextureFamily::Grating {
        period: 16,
        diagonal: true,
    },
    TextureFamily::Grating {
        period: 6,
        diagonal: false,
    },
    TextureFamily::Grating {
        period: 6,
        diagonal: true,
    },
    TextureFamily::Checkerboard,
    TextureFamily::BlurredNoise,
    TextureFamily::SparseDots,
    TextureFamily::JitteredStripes,
];

impl TextureFamily {
    pub fn label(&self) -> String {
        match *self {
            TextureFamily::Grating { period, diagonal } => {
                format!("grating_p{period}_{}", if diagonal { 45 } else { 0 })
            }
            TextureFamily::Checkerboard => "checkerboard".into(),
            TextureFamily::BlurredNoise => "blurred_noise".into(),
            TextureFamily::SparseDots => "sparse_dots".into(),
            TextureFamily::JitteredStripes => "jittered_stripes".into(),
        }
    }

    /// A `size x size` sample with values in `[0, 255]`.
    pub fn render(&self, size: usize, rng: &mut impl Rng) -> ImageBuffer {
        let clamp = |v: f64| v.clamp(0.0, 255.0);
        match *self {
            TextureFamily::Grating { period, diagonal } => {
                let phase = rng.random_range(0.0..2.0 * PI);
                let w = 2.0 * PI / period as f64;
                ImageBuffer::from_fn(size, size, |r, c| {
                    let t = if diagonal { r + c } else { c } as f64;
                    127.5 + 127.5 * (w * t + phase).sin()
                })
            }
            TextureFamily::Checkerboard => {
                let noise = Normal::new(0.0, 18.0).unwrap();
                let (dr, dc) = (rng.random_range(0..16), rng.random_range(0..16));
                let values: Vec<f64> = (0..size * size)
                    .map(|i| {
                        let (r, c) = (i / size + dr, i % size + dc);
                        let base = if (r / 8 + c / 8) % 2 == 0 {
                            50.0
                        } else {
                            205.0
                        };
                        clamp(base + noise.sample(rng))
                    })
                    .collect();
                ImageBuffer::new(size, size, values).unwrap()
            }
            TextureFamily::BlurredNoise => {
                let noise = Normal::new(0.0, 1.0).unwrap();
                let mut field: Vec<f64> = (0..size * size).map(|_| noise.sample(rng)).collect();
                for _ in 0..2 {
                    field = box_blur(&field, size, 2);
                }
                let n = field.len() as f64;
                let mean = field.iter().sum::<f64>() / n;
                let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let values = field
                    .iter()
                    .map(|v| clamp(127.5 + 45.0 * (v - mean) / std))
                    .collect();
                ImageBuffer::new(size, size, values).unwrap()
            }
            TextureFamily::SparseDots => {
                let noise = Normal::new(0.0, 6.0).unwrap();
                let mut values: Vec<f64> = (0..size * size)
                    .map(|_| clamp(30.0 + noise.sample(rng)))
                    .collect();
                let n_dots = size * size / 80;
                for _ in 0..n_dots {
                    let (cr, cc) = (
                        rng.random_range(0..size) as isize,
                        rng.random_range(0..size) as isize,
                    );
                    let level = rng.random_range(200.0..255.0);
                    for dr in -1..=1_isize {
                        for dc in -1..=1_isize {
                            let (r, c) = (cr + dr, cc + dc);
                            if (0..size as isize).contains(&r) && (0..size as isize).contains(&c) {
                                let fade = if dr == 0 && dc == 0 { 1.0 } else { 0.7 };
                                let v = &mut values[r as usize * size + c as usize];
                                *v = v.max(fade * level);
                            }
                        }
                    }
                }
                ImageBuffer::new(size, size, values).unwrap()
            }
            TextureFamily::JitteredStripes => {
                let noise = Normal::new(0.0, 8.0).unwrap();
                let mut levels = Vec::with_capacity(size);
                let mut bright = rng.random_bool(0.5);
                while levels.len() < size {
                    let height = rng.random_range(2..=7);
                    let base = if bright { 200.0 } else { 55.0 };
                    let level = base + rng.random_range(-25.0..25.0);
                    levels.extend(std::iter::repeat_n(level, height));
                    bright = !bright;
                }
                let values = (0..size * size)
                    .map(|i| clamp(levels[i / size] + noise.sample(rng)))
                    .collect();
                ImageBuffer::new(size, size, values).unwrap()
            }
        }
    }
}

/// Periodic `(2 radius + 1)^2` box blur of a square field.
fn box_blur(field: &[f64], size: usize, radius: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for r in 0..size {
            for c in 0..size {
                let mut sum = 0.0;
                for d in 0..=2 * radius {
                    let k = (if horizontal { c } else { r } + size + d - radius) % size;
                    sum += if horizontal {
                        src[r * size + k]
                    } else {
                        src[k * size + c]
                    };
                }
                out[r * size + c] = sum / (2 * radius + 1) as f64;
            }
        }
        out
    };
    pass(&pass(field, true), false)
}

/// The first `n_classes` catalogue families, `images_per_class` renders
/// each. Identical for identical arguments.
pub fn synthetic_textures(
    n_classes: usize,
    images_per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<TextureClass>> {
    if n_classes == 0 || n_classes > CATALOGUE.len() {
        return Err(Error::InvalidParameter(format!(
            "{n_classes} synthetic classes requested; the catalogue has {}",
            CATALOGUE.len()
        )));
    }
    if images_per_class == 0 || size == 0 {
        return Err(Error::InvalidParameter(
            "synthetic images need a positive count and size".into(),
        ));
    }
    CATALOGUE[..n_classes]
        .iter()
        .enumerate()
        .map(|(id, family)| {
            let label = family.label();
            let images = (0..images_per_class)
                .map(|i| {
                    let mut rng = rng(seed, ((id as u64) << 32) | i as u64);
                    family
                        .render(size, &mut rng)
                        .with_source(format!("synthetic/{label}/{i}"))
                })
                .collect();
            TextureClass::new(id, label, images)
        })
        .collect()
}
