//! End-to-end acceptance suite. Runs without the libtest harness so the
//! timing checks never share the CPU with other tests.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_glcm, brute_haralick5, brute_lbp, jacobi_eigen, random_byte_image, random_image, rng,
    span_projector,
};
use modal_texture::baseline::{compute_glcm, haralick_features, lbp_features, GlcmParams};
use modal_texture::bench::{
    parse_mode_counts, run_benchmark, run_mode_sweep, run_timing, ExperimentConfig,
};
use modal_texture::classifier::{accuracy, SvmParams, TrainedClassifier};
use modal_texture::dataset::rotate90;
use modal_texture::dmd_features::{build_projector, FullScaleDmd};
use modal_texture::filter_features::{dct_filter_bank, dmd_filter_bank, FilterVariance};
use modal_texture::modal_basis::{build_operator, mode_residual, solve_modes, GridSpec};
use modal_texture::{FeatureExtractor, ImageBuffer};
use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn modal_basis_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for side in [3, 8, 16] {
        let op = build_operator(GridSpec::square(side).unwrap());
        let basis = solve_modes(&op, side * side).map_err(|e| e.to_string())?;
        for i in 0..basis.len() {
            let q = basis.mode(i);
            let r = mode_residual(&op, &q, basis.eigenvalues()[i]);
            worst = worst.max(r);
            ensure(r <= 1e-8, || {
                format!("{side}x{side} mode {i} residual {r:e}")
            })?;
            ensure((q.amax() - 1.0).abs() <= 1e-12, || {
                format!("{side}x{side} mode {i} norm {}", q.amax())
            })?;
        }
    }
    let op = build_operator(GridSpec::square(4).unwrap());
    let basis = solve_modes(&op, 16).map_err(|e| e.to_string())?;
    let (oracle, _) = jacobi_eigen(op.matrix());
    for (k, (got, want)) in basis.eigenvalues().iter().zip(&oracle).enumerate() {
        ensure((got - want.max(0.0)).abs() <= 1e-10, || {
            format!("4x4 eigenvalue {k}: {got} vs {want}")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("worst residual {worst:.1e}, {elapsed:.2?}"))
}

fn reconstruction() -> Outcome {
    let projector =
        build_projector(solve_modes(&build_operator(GridSpec::square(16).unwrap()), 256).unwrap())
            .map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..256).collect();
    let mut rng = rng(1001);
    let mut worst = 0.0f64;
    for n in 0..100 {
        let image = random_image(16, 16, &mut rng);
        let lambda = projector.project(&image).map_err(|e| e.to_string())?.lambda;
        let rebuilt =
            modal_texture::dmd_features::reconstruct(projector.basis(), &lambda, &all).unwrap();
        let rel = common::max_abs_diff(rebuilt.pixels(), image.pixels()) / image.max_abs();
        worst = worst.max(rel);
        ensure(rel <= 1e-8, || format!("image {n}: relative error {rel:e}"))?;
    }
    Ok(format!("worst relative error {worst:.1e} over 100 images"))
}

fn dual_recovery() -> Outcome {
    let grid = GridSpec::square(8).unwrap();
    let projector = build_projector(solve_modes(&build_operator(grid), 25).unwrap())
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in 0..25 {
        let mode = projector.basis().mode(k);
        let image = ImageBuffer::new(8, 8, mode.as_slice().to_vec()).unwrap();
        let lambda = projector.project(&image).map_err(|e| e.to_string())?.lambda;
        for (j, v) in lambda.iter().enumerate() {
            let err = (v - if j == k { 1.0 } else { 0.0 }).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("mode {k} coordinate {j} = {v}"))?;
        }
    }
    Ok(format!("worst deviation {worst:.1e}"))
}

fn rotation_invariance() -> Outcome {
    let extractor = FullScaleDmd::from_basis(
        solve_modes(&build_operator(GridSpec::square(16).unwrap()), 256).unwrap(),
        100,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = rng(1004);
    let mut worst = 0.0f64;
    for n in 0..100 {
        let image = random_image(16, 16, &mut rng);
        let base = extractor.compute(&image).map_err(|e| e.to_string())?;
        let scale = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for turns in 1..4 {
            let turned = extractor
                .compute(&rotate90(&image, turns).unwrap())
                .map_err(|e| e.to_string())?;
            for (k, (a, b)) in base.iter().zip(&turned).enumerate() {
                let rel = (a - b).abs() / scale;
                worst = worst.max(rel);
                ensure(rel <= 1e-6, || {
                    format!("image {n}, {turns} turns, amplitude {k}: {a} vs {b}")
                })?;
            }
        }
    }
    Ok(format!("worst relative change {worst:.1e}"))
}

fn filter_banks() -> Outcome {
    let h = [[1.0, 1.0, 1.0], [1.0, 0.0, -1.0], [1.0, -2.0, 1.0]];
    let dct = dct_filter_bank(3).map_err(|e| e.to_string())?;
    for m in 0..3 {
        for n in 0..3 {
            let want: Vec<f64> = (0..3)
                .flat_map(|i| (0..3).map(move |j| h[m][i] * h[n][j]))
                .collect();
            ensure(dct.kernels()[3 * m + n] == want, || {
                format!("dct3 kernel {m}{n} differs")
            })?;
        }
    }
    let op = build_operator(GridSpec::square(3).unwrap());
    let (values, vectors) = jacobi_eigen(op.matrix());
    let bank = dmd_filter_bank().map_err(|e| e.to_string())?;
    let kernels = DMatrix::from_fn(9, 9, |r, c| bank.kernels()[c][r]);
    let mut start = 0;
    let mut worst = 0.0f64;
    while start < 9 {
        let mut end = start + 1;
        while end < 9 && (values[end] - values[start]).abs() <= 1e-9 * values[start].abs().max(1.0)
        {
            end += 1;
        }
        let ours = span_projector(&kernels.columns(start, end - start).into_owned());
        let oracle = span_projector(&vectors.columns(start, end - start).into_owned());
        let gap = (ours - oracle).amax();
        worst = worst.max(gap);
        ensure(gap <= 1e-10, || {
            format!("dmd3 eigenspace {start}..{end} differs by {gap:e}")
        })?;
        for k in start..end {
            let q = kernels.column(k).into_owned();
            let r = (op.matrix() * &q - &q * values[k]).amax();
            ensure(r <= 1e-10 * values[k].max(1.0), || {
                format!("dmd3 kernel {k} residual {r:e}")
            })?;
        }
        start = end;
    }
    let flat = ImageBuffer::filled(16, 16, 128.0);
    for extractor in [
        FilterVariance::dct3().unwrap(),
        FilterVariance::filtering_dmd().unwrap(),
    ] {
        let features = extractor.compute(&flat).map_err(|e| e.to_string())?;
        ensure(features.iter().all(|&f| f.abs() <= 1e-18), || {
            format!("{} on a constant image: {features:?}", extractor.name())
        })?;
    }
    Ok(format!("dmd3 eigenspace gap {worst:.1e}"))
}

fn baseline_oracles() -> Outcome {
    let mut rng = rng(1006);
    let params = GlcmParams::default();
    let mut worst = 0.0f64;
    for n in 0..50 {
        let image = random_byte_image(8, 8, &mut rng);
        let glcm = compute_glcm(&image, &params).map_err(|e| e.to_string())?;
        ensure(
            glcm.counts() == brute_glcm(&image, params.levels).as_slice(),
            || format!("image {n}: GLCM differs"),
        )?;
        let got = haralick_features(&glcm).values;
        let want = brute_haralick5(glcm.normalized(), params.levels);
        for (k, (g, w)) in got[..5].iter().zip(&want).enumerate() {
            let err = (g - w).abs() / w.abs().max(1.0);
            worst = worst.max(err);
            ensure(err <= 1e-10, || format!("image {n}: h{} {g} vs {w}", k + 1))?;
        }
        let hist = lbp_features(&image, 8, 1).map_err(|e| e.to_string())?;
        let counts = brute_lbp(&image);
        let want: Vec<f64> = counts
            .iter()
            .map(|c| c / hist.coded_pixels as f64)
            .collect();
        ensure(hist.bins == want, || {
            format!("image {n}: LBP histogram differs")
        })?;
    }
    Ok(format!("worst Haralick deviation {worst:.1e}"))
}

fn blobs(centers: &[(f64, f64)], per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (label, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_class {
            x.push(vec![
                cx + noise.sample(&mut rng),
                cy + noise.sample(&mut rng),
            ]);
            y.push(label);
        }
    }
    (x, y)
}

fn classifier_sanity() -> Outcome {
    let params = SvmParams::default();
    let (x, y) = blobs(&[(-5.0, -5.0), (5.0, 5.0)], 50, 1007);
    let model = TrainedClassifier::fit(&x, &y, &params).map_err(|e| e.to_string())?;
    let train_acc = accuracy(&model.predict(&x).unwrap(), &y).unwrap();
    ensure(train_acc == 1.0, || {
        format!("separable training accuracy {train_acc}")
    })?;
    let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
    let (train_x, train_y) = blobs(&centers, 30, 1008);
    let (test_x, test_y) = blobs(&centers, 100, 1009);
    let model = TrainedClassifier::fit(&train_x, &train_y, &params).map_err(|e| e.to_string())?;
    let holdout = accuracy(&model.predict(&test_x).unwrap(), &test_y).unwrap();
    ensure(holdout >= 0.95, || {
        format!("three-blob holdout accuracy {holdout}")
    })?;
    let again = TrainedClassifier::fit(&train_x, &train_y, &params).map_err(|e| e.to_string())?;
    ensure(model == again, || "rerun produced a different model".into())?;
    Ok(format!("holdout accuracy {holdout:.3}"))
}

fn default_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig::parse("output_dir = \"out\"\nbasis_cache = \"bases\"\n", dir).unwrap()
}

fn end_to_end(dir: &Path) -> Outcome {
    let start = Instant::now();
    let report = run_benchmark(&default_config(dir)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.all_ok(), || {
        format!(
            "failed rows: {:?}",
            report.rows.iter().filter(|r| !r.ok()).collect::<Vec<_>>()
        )
    })?;
    let acc = |name: &str| report.row(name).and_then(|r| r.accuracy).unwrap();
    let summary = report
        .rows
        .iter()
        .map(|r| format!("{} {:.4}", r.extractor, r.accuracy.unwrap()))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(acc("fs_dmd") >= 0.90, || {
        format!("fs_dmd accuracy {}; {summary}", acc("fs_dmd"))
    })?;
    let gap = (acc("filtering_dmd") - acc("dct3")).abs();
    ensure(gap <= 0.03, || {
        format!("filtering_dmd vs dct3 gap {gap}; {summary}")
    })?;
    ensure(elapsed < Duration::from_secs(300), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{summary}; {elapsed:.1?}"))
}

fn timing_ordering(dir: &Path) -> Outcome {
    let table = run_timing(&default_config(dir), 50).map_err(|e| e.to_string())?;
    let median = |name: &str| table.median(name).unwrap();
    let (fs, haralick, filtering, dct) = (
        median("fs_dmd"),
        median("haralick"),
        median("filtering_dmd"),
        median("dct3"),
    );
    let summary = format!("fs_dmd {fs:.2e}, haralick {haralick:.2e}, filtering_dmd {filtering:.2e}, dct3 {dct:.2e} s/image");
    ensure(fs <= haralick / 5.0, || {
        format!("fs_dmd not 5x faster than haralick; {summary}")
    })?;
    ensure(fs <= filtering, || {
        format!("fs_dmd slower than filtering_dmd; {summary}")
    })?;
    let ratio = filtering / dct;
    ensure((1.0 / 1.5..=1.5).contains(&ratio), || {
        format!("filtering_dmd/dct3 = {ratio:.2}; {summary}")
    })?;
    Ok(summary)
}

fn mode_sweep(dir: &Path) -> Outcome {
    let counts = parse_mode_counts("10..100:10").unwrap();
    let points = run_mode_sweep(&default_config(dir), &counts).map_err(|e| e.to_string())?;
    let at = |n: usize| {
        points
            .iter()
            .find(|p| p.modes == n)
            .map(|p| p.accuracy)
            .unwrap()
    };
    let summary = points
        .iter()
        .map(|p| format!("{}:{:.4}", p.modes, p.accuracy))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(at(90) >= at(10), || {
        format!("accuracy fell from 10 to 90 modes; {summary}")
    })?;
    ensure((at(100) - at(90)).abs() <= 0.02, || {
        format!("no plateau between 90 and 100 modes; {summary}")
    })?;
    Ok(summary)
}

fn external_database(root: &Path, dir: &Path) -> Outcome {
    let text = format!(
        "dataset = \"{}\"\nextractors = [\"fs_dmd\"]\noutput_dir = \"external\"\nbasis_cache = \"bases\"\n",
        root.display()
    );
    let config = ExperimentConfig::parse(&text, dir).map_err(|e| e.to_string())?;
    let report = run_benchmark(&config).map_err(|e| e.to_string())?;
    let acc = report.rows[0]
        .accuracy
        .ok_or_else(|| format!("{:?}", report.rows[0].error))?;
    let within = ((acc * 100.0) - 87.5).abs() <= 5.0;
    Ok(format!(
        "fs_dmd accuracy {:.1}% ({} the 82.5..92.5 band)",
        acc * 100.0,
        if within { "inside" } else { "outside" }
    ))
}

fn run(number: usize, name: &str, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
        let message = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {message}"))
    });
    let elapsed = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("PASS {number:>2} {name}: {detail} [{elapsed:.2?}]");
            true
        }
        Err(detail) => {
            println!("FAIL {number:>2} {name}: {detail} [{elapsed:.2?}]");
            false
        }
    }
}

fn main() -> ExitCode {
    let workdir = tempfile::tempdir().expect("temporary directory");
    let dir = workdir.path();
    let results = [
        run(1, "modal basis correctness", modal_basis_correctness),
        run(2, "completeness and reconstruction", reconstruction),
        run(3, "dual projection recovery", dual_recovery),
        run(4, "rotation invariance", rotation_invariance),
        run(5, "filter banks", filter_banks),
        run(6, "baseline oracle equivalence", baseline_oracles),
        run(7, "classifier sanity", classifier_sanity),
        run(8, "synthetic end-to-end benchmark", || end_to_end(dir)),
        run(9, "timing ordering", || timing_ordering(dir)),
        run(10, "mode sweep shape", || mode_sweep(dir)),
    ];
    match std::env::var_os("DMDTEX_VISTEX_DIR") {
        Some(root) => {
            let info = external_database(Path::new(&root), dir).unwrap_or_else(|e| format!("error: {e}"));
            println!("INFO 11 external texture database: {info}");
        }
        None => println!("INFO 11 external texture database: skipped (set DMDTEX_VISTEX_DIR to a class directory tree)"),
    }
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
