//! Deterministic CSV emission. All sweep numerics are printed with six
//! decimal places so equal inputs reproduce byte-identical files; failed
//! runs keep their row with NaN fields.

use std::fs;
use std::io;
use std::path::Path;

use crate::sweep::{loss_variance_first_n, SweepResults};

pub const SWEEP_HEADER: &str =
    "alpha,seed,train_acc,test_acc,final_loss,loss_variance_first1000,wall_time_s";

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// One row per (alpha, seed) run in grid order, followed by one average
/// row per alpha (seed column `avg`, averaged over successful runs).
pub fn sweep_csv(results: &SweepResults) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let mut alphas: Vec<f64> = Vec::new();
    for r in &results.records {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &alpha in &alphas {
        let mut rows: Vec<&crate::sweep::RunRecord> =
            results.records.iter().filter(|r| r.alpha == alpha).collect();
        rows.sort_by_key(|r| r.seed);
        for r in rows {
            match &r.metrics {
                Some(m) => {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        alpha,
                        r.seed,
                        fmt6(m.train_accuracy),
                        fmt6(m.test_accuracy),
                        fmt6(*m.loss_series.last().unwrap_or(&f64::NAN)),
                        fmt6(loss_variance_first_n(&m.loss_series, 1000)),
                        fmt6(m.wall_seconds),
                    ));
                }
                None => {
                    out.push_str(&format!(
                        "{},{},NaN,NaN,NaN,NaN,NaN\n",
                        alpha, r.seed
                    ));
                }
            }
        }
        out.push_str(&format!(
            "{},avg,{},{},NaN,{},NaN\n",
            alpha,
            fmt6(results.average_train_accuracy(alpha)),
            fmt6(results.average_test_accuracy(alpha)),
            fmt6(results.average_loss_variance(alpha, 1000)),
        ));
    }
    out
}

/// Mean training-loss curves: `iteration,alpha,loss`, alpha ascending then
/// iteration ascending.
pub fn loss_curve_csv(results: &SweepResults) -> String {
    let mut out = String::from("iteration,alpha,loss\n");
    let mut alphas: Vec<f64> = Vec::new();
    for r in &results.records {
        if !alphas.contains(&r.alpha) {
            alphas.push(r.alpha);
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for &alpha in &alphas {
        for (i, loss) in results.mean_loss_curve(alpha).iter().enumerate() {
            out.push_str(&format!("{i},{alpha},{}\n", fmt6(*loss)));
        }
    }
    out
}

pub fn write_string(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)
}

/// Companion path for the loss curves next to the sweep summary:
/// `results.csv` becomes `results_loss.csv`.
pub fn loss_curve_path(summary: &Path) -> std::path::PathBuf {
    let stem = summary
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    let ext = summary
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    summary.with_file_name(format!("{stem}_loss.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{RunRecord, SweepResults};
    use fracnn::Metrics;

    fn record(alpha: f64, seed: u64, test_acc: f64) -> RunRecord {
        RunRecord {
            alpha,
            seed,
            metrics: Some(Metrics {
                loss_series: vec![1.0, 0.5, 0.25],
                train_accuracy: test_acc + 0.01,
                test_accuracy: test_acc,
                wall_seconds: 1.5,
            }),
            error: None,
        }
    }

    #[test]
    fn empty_results_emit_header_only() {
        let csv = sweep_csv(&SweepResults { records: vec![] });
        assert_eq!(csv, format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn two_runs_make_three_lines_plus_average() {
        let results = SweepResults {
            records: vec![record(1.0, 2, 0.97), record(1.0, 1, 0.95)],
        };
        let csv = sweep_csv(&results);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4); // header + 2 runs + 1 average
        assert!(lines[1].starts_with("1,1,")); // seeds sorted ascending
        assert!(lines[2].starts_with("1,2,"));
        assert!(lines[3].starts_with("1,avg,"));
        assert!(lines[3].contains("0.960000"));
    }

    #[test]
    fn byte_stable_for_equal_inputs() {
        let results = SweepResults {
            records: vec![record(0.9, 1, 0.9731)],
        };
        assert_eq!(sweep_csv(&results), sweep_csv(&results));
    }

    #[test]
    fn failed_runs_keep_their_row() {
        let results = SweepResults {
            records: vec![
                record(1.9, 1, 0.1),
                RunRecord {
                    alpha: 1.9,
                    seed: 2,
                    metrics: None,
                    error: Some("boom".into()),
                },
            ],
        };
        let csv = sweep_csv(&results);
        assert!(csv.contains("1.9,2,NaN,NaN,NaN,NaN,NaN"));
        // grid rows plus the average row survive the failure
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn loss_curve_rows() {
        let results = SweepResults {
            records: vec![record(1.0, 1, 0.9), record(1.0, 2, 0.9)],
        };
        let csv = loss_curve_csv(&results);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 iterations
        assert_eq!(lines[1], "0,1,1.000000");
    }

    #[test]
    fn companion_path() {
        assert_eq!(
            loss_curve_path(Path::new("out/sweep.csv")),
            Path::new("out/sweep_loss.csv")
        );
    }
}
