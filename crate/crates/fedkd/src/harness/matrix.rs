//! Multi-config, multi-seed experiment matrices with mean ± std summaries.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::run_experiment;

#[derive(Debug, Clone)]
pub struct MatrixCell {
    pub name: String,
    pub accuracies: Vec<f64>,
    pub failed: bool,
}

impl MatrixCell {
    pub fn mean(&self) -> f64 {
        if self.accuracies.is_empty() {
            return f64::NAN;
        }
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    /// Sample standard deviation; 0 for a single seed.
    pub fn std(&self) -> f64 {
        let n = self.accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = self
            .accuracies
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    }

    /// Table-style cell text in percent: `93.03±0.32`, or `failed`.
    pub fn cell_text(&self) -> String {
        if self.failed {
            return "failed".to_string();
        }
        format!("{:.2}±{:.2}", self.mean() * 100.0, self.std() * 100.0)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSummary {
    pub cells: Vec<MatrixCell>,
    pub csv_path: PathBuf,
    pub text_path: PathBuf,
}

/// Run every `(config, seed)` pair and emit `matrix.csv` plus an aligned
/// text table. A failed run marks its cell `failed` but the matrix is still
/// written.
pub fn run_matrix(
    configs: &[(String, ExperimentConfig)],
    seeds: &[u64],
    out_root: &Path,
) -> Result<MatrixSummary> {
    fs::create_dir_all(out_root)?;
    let mut cells = Vec::with_capacity(configs.len());
    for (name, base) in configs {
        let mut accuracies = Vec::new();
        let mut failed = false;
        for &seed in seeds {
            let mut config = base.clone();
            config.seed = seed;
            config.run_id = format!("{name}-s{seed}");
            match run_experiment(&config, out_root) {
                Ok(summary) => accuracies.push(summary.final_accuracy),
                Err(e) => {
                    eprintln!("warning: run {name} seed {seed} failed: {e}");
                    failed = true;
                }
            }
        }
        cells.push(MatrixCell {
            name: name.clone(),
            accuracies,
            failed,
        });
    }

    let csv_path = out_root.join("matrix.csv");
    let mut csv = String::from("config,seeds,mean_acc,std_acc,cell\n");
    for cell in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.name,
            cell.accuracies.len(),
            if cell.failed {
                String::new()
            } else {
                format!("{:.6}", cell.mean())
            },
            if cell.failed {
                String::new()
            } else {
                format!("{:.6}", cell.std())
            },
            cell.cell_text()
        ));
    }
    fs::write(&csv_path, csv)?;

    let text_path = out_root.join("matrix.txt");
    let width = cells
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(6)
        .max("config".len());
    let mut text = format!("{:width$}  {}\n", "config", "final accuracy");
    for cell in &cells {
        text.push_str(&format!("{:width$}  {}\n", cell.name, cell.cell_text()));
    }
    fs::write(&text_path, &text)?;
    print!("{text}");

    Ok(MatrixSummary {
        cells,
        csv_path,
        text_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_std_is_zero_and_formatting_matches() {
        let cell = MatrixCell {
            name: "x".into(),
            accuracies: vec![0.91],
            failed: false,
        };
        assert_eq!(cell.std(), 0.0);
        assert_eq!(cell.cell_text(), "91.00±0.00");
    }

    #[test]
    fn three_seed_arithmetic() {
        let cell = MatrixCell {
            name: "x".into(),
            accuracies: vec![0.90, 0.91, 0.92],
            failed: false,
        };
        assert!((cell.mean() - 0.91).abs() < 1e-12);
        assert!((cell.std() - 0.01).abs() < 1e-12);
        assert_eq!(cell.cell_text(), "91.00±1.00");
    }
}
