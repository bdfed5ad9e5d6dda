use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use modal_texture::basis_cache::{cache_file_name, save_basis};
use modal_texture::bench::{self, ExperimentConfig};
use modal_texture::filter_features::{dct_filter_bank, dmd_filter_bank};
use modal_texture::modal_basis::{build_operator, solve_modes, GridSpec};

/// Modal texture features: benchmark runner and basis tools.
#[derive(Debug, Parser)]
#[command(name = "dmdtex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Accuracy, timing and mode-sweep experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Filter-bank utilities.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Modal-basis utilities.
    #[command(subcommand)]
    Basis(BasisCommand),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Train and score every configured extractor; writes report.csv.
    Run { config: PathBuf },
    /// Full-scale modal accuracy per feature count; writes sweep.dat and sweep.svg.
    Sweep {
        config: PathBuf,
        /// `start..end:step` (inclusive) or a comma-separated list.
        #[arg(long, default_value = "10..100:10")]
        modes: String,
    },
    /// Median per-image extraction time; writes timing.csv.
    Time {
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        reps: usize,
    },
}

#[derive(Debug, Subcommand)]
enum BankCommand {
    /// Print the 3x3 kernels of a filter bank.
    Dump { bank: Bank },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bank {
    Dct3,
    Dmd3,
}

#[derive(Debug, Subcommand)]
enum BasisCommand {
    /// Solve a plate basis and write it in the cache format.
    Build {
        /// Grid as `<rows>x<cols>`.
        grid: String,
        /// Number of modes to keep.
        #[arg(long)]
        nq: usize,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn parse_grid(text: &str) -> Result<GridSpec> {
    let (rows, cols) = text
        .split_once(['x', 'X'])
        .with_context(|| format!("grid `{text}` is not of the form <rows>x<cols>"))?;
    let rows = rows
        .trim()
        .parse()
        .with_context(|| format!("bad row count in `{text}`"))?;
    let cols = cols
        .trim()
        .parse()
        .with_context(|| format!("bad column count in `{text}`"))?;
    Ok(GridSpec::new(rows, cols)?)
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn bench(command: BenchCommand) -> Result<bool> {
    let mut stdout = io::stdout().lock();
    match command {
        BenchCommand::Run { config } => {
            let config = load_config(&config)?;
            let report = bench::run_benchmark(&config)?;
            writeln!(
                stdout,
                "{:<14} {:>5} {:>9} {:>14}  status",
                "extractor", "dim", "accuracy", "s/image"
            )?;
            for row in &report.rows {
                match (&row.error, row.accuracy, row.mean_seconds_per_image) {
                    (None, Some(acc), Some(secs)) => writeln!(
                        stdout,
                        "{:<14} {:>5} {:>9.4} {:>14.3e}  ok",
                        row.extractor, row.dim, acc, secs
                    )?,
                    (err, _, _) => writeln!(
                        stdout,
                        "{:<14} {:>5} {:>9} {:>14}  error: {}",
                        row.extractor,
                        "-",
                        "-",
                        "-",
                        err.as_deref().unwrap_or("incomplete")
                    )?,
                }
            }
            writeln!(
                stdout,
                "wrote {}",
                config.output_dir.join("report.csv").display()
            )?;
            Ok(report.all_ok())
        }
        BenchCommand::Sweep { config, modes } => {
            let config = load_config(&config)?;
            let counts = bench::parse_mode_counts(&modes)?;
            for point in bench::run_mode_sweep(&config, &counts)? {
                writeln!(stdout, "{:>5} {:.4}", point.modes, point.accuracy)?;
            }
            writeln!(
                stdout,
                "wrote {}",
                config.output_dir.join("sweep.dat").display()
            )?;
            Ok(true)
        }
        BenchCommand::Time { config, reps } => {
            let config = load_config(&config)?;
            let table = bench::run_timing(&config, reps)?;
            for row in &table.rows {
                writeln!(
                    stdout,
                    "{:<14} median {:.3e} s/image  (min {:.3e}, batch {}, {} reps)",
                    row.extractor,
                    row.median_seconds_per_image,
                    row.min_seconds_per_image,
                    row.batch,
                    row.repetitions
                )?;
            }
            writeln!(
                stdout,
                "wrote {}",
                config.output_dir.join("timing.csv").display()
            )?;
            Ok(true)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bench(command) => bench(command),
        Command::Bank(BankCommand::Dump { bank }) => {
            let bank = match bank {
                Bank::Dct3 => dct_filter_bank(3)?,
                Bank::Dmd3 => dmd_filter_bank()?,
            };
            bank.write_text(io::stdout().lock())?;
            Ok(true)
        }
        Command::Basis(BasisCommand::Build { grid, nq, out }) => {
            let grid = parse_grid(&grid)?;
            if nq == 0 {
                bail!("--nq must be positive");
            }
            let basis = solve_modes(&build_operator(grid), nq)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(cache_file_name(grid, nq));
            save_basis(&path, &basis)?;
            println!(
                "{} modes in {} groups, eigenvalues {:.6e}..{:.6e}; wrote {}",
                basis.len(),
                basis.groups().len(),
                basis.eigenvalues()[0],
                basis.eigenvalues()[basis.len() - 1],
                path.display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
