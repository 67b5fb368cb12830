//! `fedkd` — config-driven federated-learning experiments.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime failure, 3 selftest
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedkd::harness::{emit_plots, run_experiment, run_matrix, run_selftest, ExperimentConfig};
use fedkd::Error;

#[derive(Parser)]
#[command(name = "fedkd", about = "Deterministic federated-learning simulator with data-free knowledge distillation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (a per-run subdirectory is created).
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run a config × seed matrix and summarize mean ± std accuracy.
    Matrix {
        /// Config files: comma-separated paths, a directory, or a glob with
        /// `*` in the file name (e.g. `configs/mnist-*.json`).
        #[arg(long)]
        configs: String,
        /// Comma-separated seeds, e.g. `1,2,3`.
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Render SVG charts from one or more rounds.csv files.
    Plot {
        /// rounds.csv files: comma-separated paths or a glob with `*`.
        #[arg(long = "in")]
        input: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient checks and core invariants.
    Selftest,
}

/// Expand a comma-separated list of paths, directories, or single-`*` globs.
fn expand_inputs(spec: &str, expect_file: &str) -> Result<Vec<PathBuf>, Error> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let path = Path::new(part);
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy() == expect_file))
                .collect();
            if entries.is_empty() {
                // Fall back to any JSON files for config directories.
                entries = std::fs::read_dir(path)?
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
            }
            entries.sort();
            out.extend(entries);
        } else if part.contains('*') {
            let (dir, pattern) = match path.parent() {
                Some(parent) if !parent.as_os_str().is_empty() => {
                    (parent.to_path_buf(), path.file_name())
                }
                _ => (PathBuf::from("."), path.file_name()),
            };
            let pattern = pattern
                .map(|p| p.to_string_lossy().to_string())
                .unwrap_or_default();
            let (prefix, suffix) = pattern.split_once('*').ok_or_else(|| {
                Error::InvalidConfig(format!("glob must contain `*` in the file name: {part}"))
            })?;
            let mut matches: Vec<PathBuf> = std::fs::read_dir(&dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.file_name().is_some_and(|n| {
                        let name = n.to_string_lossy();
                        name.starts_with(prefix) && name.ends_with(suffix)
                    })
                })
                .collect();
            matches.sort();
            out.extend(matches);
        } else {
            out.push(path.to_path_buf());
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig(format!("no inputs matched `{spec}`")));
    }
    Ok(out)
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Error> {
    let seeds: Result<Vec<u64>, _> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse::<u64>)
        .collect();
    let seeds =
        seeds.map_err(|e| Error::InvalidConfig(format!("bad seed list `{spec}`: {e}")))?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    Ok(seeds)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

/// Exit code classification: configuration problems are 1, everything else
/// at runtime is 2.
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::InvalidConfig(_)
        | Error::Json(_)
        | Error::IdxMagic { .. }
        | Error::IdxTruncated { .. }
        | Error::IdxCountMismatch { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), (u8, Error)> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut experiment = load_config(&config).map_err(|e| (1, e))?;
            if let Some(seed) = seed {
                experiment.seed = seed;
            }
            experiment.validate().map_err(|e| (1, e))?;
            let summary =
                run_experiment(&experiment, &out).map_err(|e| (exit_code_for(&e), e))?;
            println!(
                "run {} finished: final accuracy {:.4} ({} rounds, {} ms) -> {}",
                experiment.run_id,
                summary.final_accuracy,
                experiment.round.rounds,
                summary.total_wall_ms,
                summary.run_dir.display()
            );
            Ok(())
        }
        Command::Matrix { configs, seeds, out } => {
            let paths = expand_inputs(&configs, "config.json").map_err(|e| (1, e))?;
            let seeds = parse_seeds(&seeds).map_err(|e| (1, e))?;
            let mut named = Vec::new();
            for path in paths {
                let config = load_config(&path).map_err(|e| (1, e))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| config.run_id.clone());
                named.push((name, config));
            }
            let summary =
                run_matrix(&named, &seeds, &out).map_err(|e| (exit_code_for(&e), e))?;
            println!("matrix written to {}", summary.csv_path.display());
            Ok(())
        }
        Command::Plot { input, out } => {
            let paths = expand_inputs(&input, "rounds.csv").map_err(|e| (1, e))?;
            let written = emit_plots(&paths, &out).map_err(|e| (exit_code_for(&e), e))?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Selftest => run_selftest().map_err(|e| (3, e)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, error)) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}
