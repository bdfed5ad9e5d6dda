use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use modal_texture::basis_cache::{cache_file_name, load_basis};
use modal_texture::modal_basis::{build_operator, solve_modes, GridSpec};

fn dmdtex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmdtex"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        format!(
            "synthetic_classes = 3\nsynthetic_size = 64\npatch_size = 16\npatches_per_class = 40\n\
             train = 10\ntest = 30\nfs_dmd_features = 12\nsvm_epochs = 40\ntiming_batch = 4\n\
             output_dir = \"out\"\n{extra}"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bank_dump_prints_nine_kernels() {
    for bank in ["dct3", "dmd3"] {
        let out = dmdtex(&["bank", "dump", bank]);
        assert!(out.status.success());
        let text = stdout(&out);
        let numbers: Vec<f64> = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .flat_map(|l| {
                l.split_whitespace()
                    .map(|v| v.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(numbers.len(), 81, "{bank}:\n{text}");
    }
    assert!(!dmdtex(&["bank", "dump", "dct5"]).status.success());
}

#[test]
fn basis_build_writes_a_loadable_cache_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dmdtex(&[
        "basis",
        "build",
        "4x4",
        "--nq",
        "16",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = GridSpec::square(4).unwrap();
    let loaded = load_basis(dir.path().join(cache_file_name(grid, 16))).unwrap();
    let fresh = solve_modes(&build_operator(grid), 16).unwrap();
    assert_eq!(loaded.eigenvalues(), fresh.eigenvalues());
    assert_eq!(loaded.modes(), fresh.modes());

    let bad = dmdtex(&["basis", "build", "4by4", "--nq", "16"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

#[test]
fn bench_run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = dmdtex(&["bench", "run", &config]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        stdout(&out).lines().filter(|l| l.ends_with("  ok")).count(),
        6
    );
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(
        report
            .lines()
            .filter(|l| l.starts_with("synthetic,"))
            .count(),
        6
    );
}

#[test]
fn bench_run_fails_when_an_extractor_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "extractors = [\"dct3\", \"fs_dmd\"]\n");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("fs_dmd_features = 12", "fs_dmd_features = 5000");
    fs::write(&config, text).unwrap();
    let out = dmdtex(&["bench", "run", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("error:"));
    assert!(fs::read_to_string(dir.path().join("out/report.csv"))
        .unwrap()
        .contains(",ok,"));
}

#[test]
fn bad_configs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "extractors = [\"sift\"]\n");
    let out = dmdtex(&["bench", "run", &config]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:") && err.contains("sift"), "{err}");
    let missing = dmdtex(&[
        "bench",
        "run",
        dir.path().join("nope.toml").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn sweep_and_timing_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let sweep = dmdtex(&["bench", "sweep", &config, "--modes", "4,8,12"]);
    assert!(
        sweep.status.success(),
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    assert!(
        dir.path().join("out/sweep.dat").is_file() && dir.path().join("out/sweep.svg").is_file()
    );

    let few = dmdtex(&["bench", "time", &config, "--reps", "10"]);
    assert_eq!(few.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&few.stderr).starts_with("error:"));
    let timed = dmdtex(&["bench", "time", &config, "--reps", "30"]);
    assert!(timed.status.success());
    assert_eq!(
        stdout(&timed)
            .lines()
            .filter(|l| l.contains("median"))
            .count(),
        6
    );
}
