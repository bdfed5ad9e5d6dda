//! Experiment runner: dataset, extractors and classifier wired together,
//! producing the accuracy report, the mode-count sweep and the timing table.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

pub use config::{DatasetSource, ExperimentConfig, ExtractorSpec, EXTRACTOR_NAMES};

use crate::baseline::{GlcmParams, Haralick, Hog, Lbp};
use crate::basis_cache::cached_solve;
use crate::classifier::{accuracy, SvmParams, TrainedClassifier};
use crate::dataset::{
    load_directory, make_split, synthetic_textures, write_manifest, Split, TextureClass,
};
use crate::dmd_features::FullScaleDmd;
use crate::error::{Error, Result};
use crate::feature::FeatureExtractor;
use crate::filter_features::FilterVariance;
use crate::image_buffer::ImageBuffer;
use crate::modal_basis::{build_operator, solve_modes, GridSpec};

pub const REPORT_SCHEMA: &str = "dmdtex-report v1";
pub const TIMING_SCHEMA: &str = "dmdtex-timing v1";
pub const MIN_TIMING_REPETITIONS: usize = 30;
const WARMUP_REPETITIONS: usize = 3;

/// Loads or renders the configured classes and draws the patch split.
pub fn prepare(config: &ExperimentConfig) -> Result<(Vec<TextureClass>, Split)> {
    let classes = match &config.dataset {
        DatasetSource::Synthetic {
            classes,
            images_per_class,
            size,
        } => synthetic_textures(*classes, *images_per_class, *size, config.seed)?,
        DatasetSource::Directory(root) => load_directory(root)?,
    };
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let split = make_split(&classes, &config.split)?;
    Ok((classes, split))
}

/// Builds a ready-to-run extractor for `patch_size` square patches. The
/// modal basis comes from `basis_cache` when one is configured.
pub fn build_extractor(
    spec: &ExtractorSpec,
    patch_size: usize,
    basis_cache: Option<&Path>,
) -> Result<Box<dyn FeatureExtractor>> {
    Ok(match *spec {
        ExtractorSpec::FsDmd { features } => {
            let grid = GridSpec::square(patch_size)?;
            let basis = match basis_cache {
                Some(dir) => cached_solve(dir, grid, grid.len())?,
                None => solve_modes(&build_operator(grid), grid.len())?,
            };
            Box::new(FullScaleDmd::from_basis(basis, features)?)
        }
        ExtractorSpec::Haralick { levels } => Box::new(Haralick {
            params: GlcmParams {
                levels,
                ..GlcmParams::default()
            },
        }),
        ExtractorSpec::Lbp { neighbors, radius } => Box::new(Lbp { neighbors, radius }),
        ExtractorSpec::Hog { cell, bins } => Box::new(Hog { cell, bins }),
        ExtractorSpec::FilteringDmd => Box::new(FilterVariance::filtering_dmd()?),
        ExtractorSpec::Dct3 => Box::new(FilterVariance::dct3()?),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub extractor: String,
    pub dim: usize,
    pub accuracy: Option<f64>,
    pub mean_seconds_per_image: Option<f64>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub echo: Vec<(String, String)>,
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ReportRow::ok)
    }

    pub fn row(&self, extractor: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.extractor == extractor)
    }

    /// Comment lines with the schema, config echo and wall-clock data,
    /// then one CSV row per extractor.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("report", e);
        writeln!(out, "# schema: {REPORT_SCHEMA}").map_err(io)?;
        write_echo(&mut out, &self.echo).map_err(io)?;
        writeln!(out, "# started_unix_seconds={}", self.started_unix_seconds).map_err(io)?;
        writeln!(out, "# wall_seconds={:.3}", self.wall_seconds).map_err(io)?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record([
            "dataset",
            "extractor",
            "dim",
            "accuracy",
            "mean_seconds_per_image",
            "status",
            "error",
        ])?;
        for row in &self.rows {
            let fmt = |v: Option<f64>, f: fn(f64) -> String| v.map(f).unwrap_or_default();
            csv.write_record([
                row.dataset.clone(),
                row.extractor.clone(),
                row.dim.to_string(),
                fmt(row.accuracy, |a| format!("{a:.6}")),
                fmt(row.mean_seconds_per_image, |s| format!("{s:.6e}")),
                if row.ok() { "ok" } else { "error" }.to_string(),
                row.error.clone().unwrap_or_default(),
            ])?;
        }
        csv.flush().map_err(io)?;
        Ok(())
    }
}

fn write_echo<W: Write>(out: &mut W, echo: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in echo {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn create_output(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<fs::File>)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn svm_params(config: &ExperimentConfig, source: &str) -> SvmParams {
    SvmParams {
        c: config.svm_c,
        epochs: config.svm_epochs,
        seed: config.seed,
        feature_source: source.to_string(),
    }
}

/// Features of every patch, each extraction timed on its own. Returns the
/// rows in input order and the mean seconds per image.
fn extract_all(
    extractor: &dyn FeatureExtractor,
    patches: &[&ImageBuffer],
) -> Result<(Vec<Vec<f64>>, f64)> {
    let vectors = patches
        .par_iter()
        .map(|image| extractor.extract(image))
        .collect::<Result<Vec<_>>>()?;
    let seconds =
        vectors.iter().map(|v| v.extraction_seconds).sum::<f64>() / vectors.len().max(1) as f64;
    Ok((vectors.into_iter().map(|v| v.values).collect(), seconds))
}

fn split_features(
    extractor: &dyn FeatureExtractor,
    split: &Split,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    let patches: Vec<&ImageBuffer> = split
        .train
        .iter()
        .chain(&split.test)
        .map(|p| &p.image)
        .collect();
    let (mut rows, seconds) = extract_all(extractor, &patches)?;
    let test = rows.split_off(split.train.len());
    Ok((rows, test, seconds))
}

fn score(train: &[Vec<f64>], test: &[Vec<f64>], split: &Split, params: &SvmParams) -> Result<f64> {
    let model = TrainedClassifier::fit(train, &split.train_labels(), params)?;
    accuracy(&model.predict(test)?, &split.test_labels())
}

fn evaluate(
    config: &ExperimentConfig,
    spec: &ExtractorSpec,
    split: &Split,
) -> Result<(usize, f64, f64)> {
    let extractor = build_extractor(spec, config.split.patch_size, config.basis_cache.as_deref())?;
    let (train, test, seconds) = split_features(extractor.as_ref(), split)?;
    let dim = train.first().map_or(0, Vec::len);
    let acc = score(&train, &test, split, &svm_params(config, spec.name()))?;
    Ok((dim, acc, seconds))
}

/// Accuracy and mean extraction time for every configured extractor,
/// written to `report.csv` in the output directory. A failing extractor
/// yields a row carrying its error; the other rows are unaffected.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started_unix_seconds = unix_now();
    let start = Instant::now();
    let (classes, split) = prepare(config)?;
    if config.write_manifest {
        let (_, out) = create_output(&config.output_dir, "manifest.csv")?;
        write_manifest(&classes, &split, out)?;
    }
    let dataset = config.dataset.name();
    let rows = config
        .extractors
        .iter()
        .map(|spec| {
            let mut row = ReportRow {
                dataset: dataset.clone(),
                extractor: spec.name().to_string(),
                dim: 0,
                accuracy: None,
                mean_seconds_per_image: None,
                error: None,
            };
            match evaluate(config, spec, &split) {
                Ok((dim, acc, seconds)) => {
                    row.dim = dim;
                    row.accuracy = Some(acc);
                    row.mean_seconds_per_image = Some(seconds);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    let report = ExperimentReport {
        rows,
        echo: config.echo(),
        started_unix_seconds,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let (_, out) = create_output(&config.output_dir, "report.csv")?;
    report.write_csv(out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub modes: usize,
    pub accuracy: f64,
}

/// Parses `start..end:step` (inclusive end) or a comma-separated list.
pub fn parse_mode_counts(text: &str) -> Result<Vec<usize>> {
    let bad = || {
        Error::InvalidParameter(format!(
            "bad mode counts `{text}`; expected e.g. 10..100:10 or 10,50,100"
        ))
    };
    let counts: Vec<usize> = if let Some((range, step)) = text.split_once(':') {
        let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
        let (lo, hi, step): (usize, usize, usize) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if step == 0 || lo > hi {
            return Err(bad());
        }
        (lo..=hi).step_by(step).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if counts.is_empty() || counts.contains(&0) {
        return Err(bad());
    }
    Ok(counts)
}

/// Full-scale modal accuracy as a function of the number of features.
/// Modes are orthogonal, so the leading `n` amplitudes of the largest
/// extraction equal an extraction with `n` features; one pass suffices.
/// Writes `sweep.dat` and `sweep.svg` to the output directory.
pub fn run_mode_sweep(config: &ExperimentConfig, mode_counts: &[usize]) -> Result<Vec<SweepPoint>> {
    let max = *mode_counts
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidParameter("no mode counts given".into()))?;
    if mode_counts.contains(&0) {
        return Err(Error::InvalidParameter(
            "mode counts must be positive".into(),
        ));
    }
    let (_, split) = prepare(config)?;
    let spec = ExtractorSpec::FsDmd { features: max };
    let extractor = build_extractor(
        &spec,
        config.split.patch_size,
        config.basis_cache.as_deref(),
    )?;
    let (train, test, _) = split_features(extractor.as_ref(), &split)?;
    let params = svm_params(config, spec.name());
    let points = mode_counts
        .iter()
        .map(|&n| {
            let prefix =
                |rows: &[Vec<f64>]| rows.iter().map(|r| r[..n].to_vec()).collect::<Vec<_>>();
            let accuracy = score(&prefix(&train), &prefix(&test), &split, &params)?;
            Ok(SweepPoint { modes: n, accuracy })
        })
        .collect::<Result<Vec<_>>>()?;
    let (_, mut out) = create_output(&config.output_dir, "sweep.dat")?;
    write_sweep(&mut out, &points, &config.echo()).map_err(|e| Error::io("sweep.dat", e))?;
    let (_, mut svg) = create_output(&config.output_dir, "sweep.svg")?;
    write_sweep_svg(&mut svg, &points).map_err(|e| Error::io("sweep.svg", e))?;
    Ok(points)
}

/// Two whitespace-separated columns, `modes accuracy`, after `#` comments.
pub fn write_sweep<W: Write>(
    out: &mut W,
    points: &[SweepPoint],
    echo: &[(String, String)],
) -> std::io::Result<()> {
    write_echo(out, echo)?;
    writeln!(out, "# modes accuracy")?;
    for p in points {
        writeln!(out, "{} {:.6}", p.modes, p.accuracy)?;
    }
    out.flush()
}

/// Static line plot of the sweep.
pub fn write_sweep_svg<W: Write>(out: &mut W, points: &[SweepPoint]) -> std::io::Result<()> {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 48.0;
    let max_modes = points.iter().map(|p| p.modes).max().unwrap_or(1) as f64;
    let x = |m: usize| M + (W - 2.0 * M) * m as f64 / max_modes;
    let y = |a: f64| H - M - (H - 2.0 * M) * a;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(
        out,
        r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    )?;
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{tick:.2}</text>"#,
            M - 6.0,
            y(tick) + 4.0
        )?;
    }
    let path: Vec<String> = points
        .iter()
        .map(|p| format!("{:.1},{:.1}", x(p.modes), y(p.accuracy)))
        .collect();
    writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        path.join(" ")
    )?;
    for p in points {
        writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/><text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x(p.modes),
            y(p.accuracy),
            x(p.modes),
            H - M + 16.0,
            p.modes
        )?;
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">features</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">accuracy</text>"#,
        W / 2.0,
        H - 8.0,
        H / 2.0,
        H / 2.0
    )?;
    writeln!(out, "</svg>")?;
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub extractor: String,
    pub batch: usize,
    pub repetitions: usize,
    pub median_seconds_per_image: f64,
    pub min_seconds_per_image: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
    pub echo: Vec<(String, String)>,
}

impl TimingTable {
    pub fn median(&self, extractor: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.extractor == extractor)
            .map(|r| r.median_seconds_per_image)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("timing", e);
        writeln!(out, "# schema: {TIMING_SCHEMA}").map_err(io)?;
        write_echo(&mut out, &self.echo).map_err(io)?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record([
            "extractor",
            "batch",
            "repetitions",
            "median_seconds_per_image",
            "min_seconds_per_image",
        ])?;
        for row in &self.rows {
            csv.write_record([
                row.extractor.clone(),
                row.batch.to_string(),
                row.repetitions.to_string(),
                format!("{:.6e}", row.median_seconds_per_image),
                format!("{:.6e}", row.min_seconds_per_image),
            ])?;
        }
        csv.flush().map_err(io)?;
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Evenly spaced test patches, so every class is represented.
fn timing_batch(split: &Split, size: usize) -> Vec<ImageBuffer> {
    let pool = &split.test;
    let size = size.min(pool.len());
    (0..size)
        .map(|i| pool[i * pool.len() / size].image.clone())
        .collect()
}

/// Per-image extraction time for every configured extractor.
///
/// Every extractor runs its warm-up and timed repetitions back to back
/// over the same batch of test patches, on the calling thread. The
/// reported figure is the median over repetitions of batch time divided by
/// batch size. Extractor construction happens before any timing. Writes
/// `timing.csv`.
pub fn run_timing(config: &ExperimentConfig, repetitions: usize) -> Result<TimingTable> {
    if repetitions < MIN_TIMING_REPETITIONS {
        return Err(Error::InvalidParameter(format!(
            "timing needs at least {MIN_TIMING_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    let (_, split) = prepare(config)?;
    let batch = timing_batch(&split, config.timing_batch);
    let extractors = config
        .extractors
        .iter()
        .map(|spec| build_extractor(spec, config.split.patch_size, config.basis_cache.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let mut samples = vec![Vec::with_capacity(repetitions); extractors.len()];
    for (extractor, samples) in extractors.iter().zip(&mut samples) {
        for rep in 0..WARMUP_REPETITIONS + repetitions {
            let start = Instant::now();
            let features = extractor.compute_batch(&batch)?;
            let elapsed = start.elapsed().as_secs_f64();
            std::hint::black_box(&features);
            if rep >= WARMUP_REPETITIONS {
                samples.push(elapsed / batch.len() as f64);
            }
        }
    }
    let rows = extractors
        .iter()
        .zip(&mut samples)
        .map(|(extractor, samples)| {
            let median_seconds_per_image = median(samples);
            TimingRow {
                extractor: extractor.name().to_string(),
                batch: batch.len(),
                repetitions,
                median_seconds_per_image,
                // `median` left the samples sorted.
                min_seconds_per_image: samples[0],
            }
        })
        .collect();
    let table = TimingTable {
        rows,
        echo: config.echo(),
    };
    let (_, out) = create_output(&config.output_dir, "timing.csv")?;
    table.write_csv(out)?;
    Ok(table)
}
