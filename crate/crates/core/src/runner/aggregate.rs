use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::SeedMetrics;
use crate::error::{Error, Result};

/// Normal-approximation summary of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; NaN for a single value.
    pub std: f64,
    pub stderr: f64,
    /// `mean ∓ 1.96·stderr`; NaN for a single value.
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean and 95% interval. Values are sorted first, so the result does not
/// depend on their order.
pub fn mean_ci(values: &[f64]) -> Stat {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let (std, stderr) = if n < 2 {
        (f64::NAN, f64::NAN)
    } else {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var.sqrt(), (var / n as f64).sqrt())
    };
    Stat {
        n,
        mean,
        std,
        stderr,
        ci_low: mean - 1.96 * stderr,
        ci_high: mean + 1.96 * stderr,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    /// Lifelong run index; `None` when runs are pooled.
    pub run: Option<usize>,
    /// BO step, or 1-based confidence level index for calibration curves.
    pub t: usize,
    pub metric: String,
    pub stat: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub stat: Stat,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub series: Vec<SeriesRow>,
    pub summary: Vec<SummaryRow>,
}

fn find_files(dir: &Path, name: &str, out: &mut BTreeSet<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_files(&path, name, out)?;
        } else if path.file_name().is_some_and(|f| f == name) {
            out.insert(path.canonicalize()?);
        }
    }
    Ok(())
}

type SeriesKey = (Option<usize>, usize, String);

/// Pools every seed directory found below `dirs`. Offline traces pool all
/// tasks per step; lifelong traces are kept apart per run.
pub fn aggregate(dirs: &[PathBuf]) -> Result<Aggregate> {
    let mut metric_files = BTreeSet::new();
    for d in dirs {
        find_files(d, "metrics.json", &mut metric_files)?;
    }
    if metric_files.is_empty() {
        return Err(Error::EmptyData("no metrics.json below the given directories".into()));
    }
    let mut series: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    let mut scalars: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for path in &metric_files {
        let metrics: SeedMetrics = serde_json::from_str(&fs::read_to_string(path)?)?;
        for (k, v) in &metrics.scalars {
            scalars.entry(k.clone()).or_default().push(*v);
        }
        if let Some(curve) = &metrics.calibration {
            for (h, (f, c)) in curve.freqs.iter().zip(&curve.coverage).enumerate() {
                for (name, v) in [("calibration_freq", f), ("calibration_coverage", c)] {
                    series.entry((None, h + 1, name.into())).or_default().push(*v);
                }
            }
        }
        let trace = path.with_file_name("trace.csv");
        if trace.exists() {
            read_trace(&trace, metrics.kind == "lifelong_bo", &mut series)?;
        }
    }
    Ok(Aggregate {
        series: series
            .into_iter()
            .map(|((run, t, metric), v)| SeriesRow {
                run,
                t,
                metric,
                stat: mean_ci(&v),
            })
            .collect(),
        summary: scalars
            .into_iter()
            .map(|(metric, v)| SummaryRow {
                metric,
                stat: mean_ci(&v),
            })
            .collect(),
    })
}

const TRACE_METRICS: [&str; 3] = ["simple_regret", "inference_regret", "cumulative_inference_regret"];

fn read_trace(path: &Path, per_run: bool, out: &mut BTreeMap<SeriesKey, Vec<f64>>) -> Result<()> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", path.display())))
    };
    let run_col = col("run")?;
    let t_col = col("t")?;
    let metric_cols = TRACE_METRICS
        .iter()
        .map(|m| col(m))
        .collect::<Result<Vec<_>>>()?;
    let parse_err = |e: &dyn std::fmt::Display| Error::Schema(format!("{}: {e}", path.display()));
    for rec in r.records() {
        let rec = rec?;
        let run: usize = rec[run_col].parse().map_err(|e| parse_err(&e))?;
        let t: usize = rec[t_col].parse().map_err(|e| parse_err(&e))?;
        for (name, c) in TRACE_METRICS.iter().zip(&metric_cols) {
            if rec[*c].is_empty() {
                continue;
            }
            let v: f64 = rec[*c].parse().map_err(|e| parse_err(&e))?;
            let key = (per_run.then_some(run), t, name.to_string());
            out.entry(key).or_default().push(v);
        }
    }
    Ok(())
}

/// Writes `series.csv` and `summary.csv` into `dir`.
pub fn write_aggregate(agg: &Aggregate, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stat_fields = |s: &Stat| {
        [s.n as f64, s.mean, s.std, s.stderr, s.ci_low, s.ci_high].map(|v| v.to_string())
    };
    let stat_header = ["n", "mean", "std", "stderr", "ci_low", "ci_high"];

    let series_path = dir.join("series.csv");
    let mut w = csv::Writer::from_path(&series_path)?;
    let mut header = vec!["run", "t", "metric"];
    header.extend(stat_header);
    w.write_record(&header)?;
    for row in &agg.series {
        let mut rec = vec![
            row.run.map_or(String::new(), |r| r.to_string()),
            row.t.to_string(),
            row.metric.clone(),
        ];
        rec.extend(stat_fields(&row.stat));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    let mut header = vec!["metric"];
    header.extend(stat_header);
    w.write_record(&header)?;
    for row in &agg.summary {
        let mut rec = vec![row.metric.clone()];
        rec.extend(stat_fields(&row.stat));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(vec![series_path, summary_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_has_no_interval() {
        let s = mean_ci(&[2.5]);
        assert_eq!(s.mean, 2.5);
        assert!(s.ci_low.is_nan() && s.ci_high.is_nan() && s.std.is_nan());
    }

    #[test]
    fn constant_series_zero_width() {
        let s = mean_ci(&[3.0, 3.0]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.ci_high - s.ci_low, 0.0);
    }

    #[test]
    fn three_values_by_hand() {
        // mean 2, sample var 1, stderr 1/√3
        let s = mean_ci(&[1.0, 2.0, 3.0]);
        let half = 1.96 / 3f64.sqrt();
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.std - 1.0).abs() < 1e-15);
        assert!((s.ci_high - 2.0 - half).abs() < 1e-12);
        assert!((2.0 - s.ci_low - half).abs() < 1e-12);
    }

    #[test]
    fn order_does_not_matter() {
        let a = [0.1, 0.7, 1e-9, 3.3, 2.2];
        let mut b = a;
        b.reverse();
        assert_eq!(mean_ci(&a), mean_ci(&b));
    }
}
