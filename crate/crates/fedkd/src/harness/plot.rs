//! Self-contained SVG line charts from `rounds.csv` files. One chart per
//! metric, one series per input file; output is deterministic for identical
//! inputs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::experiment::CSV_HEADER;

const COLORS: &[&str] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
]
.as_slice();

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 46.0;

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn parse_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "{} is not a rounds.csv (unexpected header)",
            path.display()
        )));
    }
    Ok(lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn extract_series(paths: &[PathBuf], column: usize) -> Result<Vec<Series>> {
    let mut series = Vec::new();
    for path in paths {
        let rows = parse_csv(path)?;
        if rows.is_empty() {
            eprintln!("warning: {} has no data rows; skipped", path.display());
            continue;
        }
        let mut points = Vec::new();
        for row in &rows {
            let round: f64 = row[0].parse().unwrap_or(f64::NAN);
            if row[column].is_empty() {
                continue;
            }
            let value: f64 = row[column].parse().unwrap_or(f64::NAN);
            if round.is_finite() && value.is_finite() {
                points.push((round, value));
            }
        }
        if points.is_empty() {
            continue;
        }
        let algorithm = rows[0][1].clone();
        let stem = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| algorithm.clone());
        series.push(Series {
            label: format!("{algorithm} ({stem})"),
            points,
        });
    }
    Ok(series)
}

fn render_chart(series: &[Series], y_label: &str) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let to_x = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let to_y = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        HEIGHT - MARGIN_B
    ));
    // Ticks: five per axis.
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let px = to_x(fx);
        let py = to_y(fy);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{fx:.0}</text>\n",
            HEIGHT - MARGIN_B + 16.0
        ));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{MARGIN_L}\" y2=\"{py}\" stroke=\"black\"/>\n",
            MARGIN_L - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{fy:.3}</text>\n",
            MARGIN_L - 7.0,
            py + 3.5
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">round</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));
    // Series.
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            MARGIN_L + 8.0,
            MARGIN_T + 14.0 + 14.0 * i as f64,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Render one SVG per metric from the given `rounds.csv` paths. Returns the
/// written file paths.
pub fn emit_plots(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    // (csv column, metric name, output file)
    let metrics = [
        (4usize, "test accuracy", "accuracy.svg"),
        (5, "train loss", "train_loss.svg"),
        (6, "generator loss", "gen_loss.svg"),
    ];
    for (column, label, file) in metrics {
        let series = extract_series(inputs, column)?;
        if series.is_empty() {
            if column != 6 {
                eprintln!("warning: no data for {label}; plot skipped");
            }
            continue;
        }
        let svg = render_chart(&series, label);
        let path = out_dir.join(file);
        fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, name: &str, rows: &[&str]) -> PathBuf {
        let sub = dir.join(name);
        fs::create_dir_all(&sub).unwrap();
        let path = sub.join("rounds.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "{CSV_HEADER}").unwrap();
        for row in rows {
            writeln!(f, "{row}").unwrap();
        }
        path
    }

    #[test]
    fn one_series_per_input_and_deterministic_output() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "a",
            &[
                "0,fedavg,0.1,1,0.500000,1.200000,,100,200,5",
                "1,fedavg,0.1,1,0.600000,1.000000,,100,200,5",
            ],
        );
        let b = write_csv(
            dir.path(),
            "b",
            &[
                "0,fedgen,0.1,1,0.550000,1.100000,0.900000,120,220,6",
                "1,fedgen,0.1,1,0.700000,0.900000,0.800000,120,220,6",
            ],
        );
        let out = dir.path().join("plots");
        let written = emit_plots(&[a.clone(), b.clone()], &out).unwrap();
        assert!(written.iter().any(|p| p.ends_with("accuracy.svg")));
        let acc = fs::read_to_string(out.join("accuracy.svg")).unwrap();
        assert_eq!(acc.matches("<polyline").count(), 2);
        // Only the fedgen series has generator-loss values.
        let gen = fs::read_to_string(out.join("gen_loss.svg")).unwrap();
        assert_eq!(gen.matches("<polyline").count(), 1);

        let out2 = dir.path().join("plots2");
        emit_plots(&[a, b], &out2).unwrap();
        let again = fs::read_to_string(out2.join("accuracy.svg")).unwrap();
        assert_eq!(acc, again);
    }

    #[test]
    fn empty_csv_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write_csv(dir.path(), "e", &[]);
        let out = dir.path().join("plots");
        let written = emit_plots(&[empty], &out).unwrap();
        assert!(written.is_empty());
    }

    #[test]
    fn axis_ranges_cover_data() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "r",
            &[
                "0,fedavg,,1,0.250000,2.000000,,1,1,1",
                "9,fedavg,,1,0.750000,0.500000,,1,1,1",
            ],
        );
        let out = dir.path().join("plots");
        emit_plots(&[a], &out).unwrap();
        let svg = fs::read_to_string(out.join("accuracy.svg")).unwrap();
        assert!(svg.contains(">0.250<"));
        assert!(svg.contains(">0.750<"));
        assert!(svg.contains(">0<") && svg.contains(">9<"));
    }
}
