//! Metrics stream I/O and CSV plot data.
//!
//! A metrics file holds one JSON object per line, one per epoch. From one or
//! more such files `write_report` emits four CSVs: mask probability and used
//! accuracy per epoch, per-class accuracy at the best epoch, and the
//! confusion matrix at the best epoch. With several runs each value column
//! becomes a `_mean`/`_std` pair (sample standard deviation; 0 for a single
//! run) and the confusion matrix is averaged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::EpochMetrics;

pub const MASK_PROB_CSV: &str = "mask_prob.csv";
pub const USED_ACC_CSV: &str = "used_acc.csv";
pub const PER_CLASS_CSV: &str = "per_class_accuracy.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";

pub fn metrics_to_jsonl(metrics: &[EpochMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

/// Parses a metrics stream; errors name the 1-based record index.
pub fn parse_metrics(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let m: EpochMetrics = serde_json::from_str(line).map_err(|e| Error::Parse {
            location: format!("record {}", i + 1),
            message: e.to_string(),
        })?;
        out.push(m);
    }
    Ok(out)
}

pub fn save_metrics(metrics: &[EpochMetrics], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_to_jsonl(metrics)).map_err(|e| Error::io(path, e))
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text).map_err(|e| match e {
        Error::Parse { location, message } => {
            Error::Parse { location: format!("{}: {location}", path.display()), message }
        }
        other => other,
    })
}

/// Mean and sample standard deviation; the deviation is 0 for fewer than
/// two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Index of the highest headline accuracy, first on ties.
pub fn best_epoch(metrics: &[EpochMetrics]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, m) in metrics.iter().enumerate() {
        if best.is_none_or(|b| m.acc_headline > metrics[b].acc_headline) {
            best = Some(i);
        }
    }
    best
}

fn value_header(name: &str, runs: usize) -> String {
    if runs == 1 {
        name.to_string()
    } else {
        format!("{name}_mean,{name}_std")
    }
}

fn value_cells(values: &[f64]) -> String {
    if values.len() == 1 {
        format!("{}", values[0])
    } else {
        let (m, s) = mean_std(values);
        format!("{m},{s}")
    }
}

/// Per-epoch CSV of one scalar field across runs, over the epochs all runs
/// share.
pub fn epoch_series_csv(runs: &[Vec<EpochMetrics>], name: &str, field: fn(&EpochMetrics) -> f64) -> String {
    let epochs = runs.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = format!("epoch,{}\n", value_header(name, runs.len()));
    for e in 0..epochs {
        let values: Vec<f64> = runs.iter().map(|r| field(&r[e])).collect();
        let _ = writeln!(out, "{},{}", runs[0][e].epoch, value_cells(&values));
    }
    out
}

fn best_records(runs: &[Vec<EpochMetrics>]) -> Result<Vec<&EpochMetrics>> {
    runs.iter()
        .map(|r| {
            best_epoch(r)
                .map(|i| &r[i])
                .ok_or_else(|| Error::invalid("metrics stream has no records"))
        })
        .collect()
}

fn class_count(best: &[&EpochMetrics]) -> Result<usize> {
    let k = best[0].acc_per_class.len();
    if best.iter().any(|m| m.acc_per_class.len() != k || m.confusion.len() != k) {
        return Err(Error::Inconsistent("runs disagree on the number of classes".into()));
    }
    Ok(k)
}

/// Per-class accuracy at each run's best epoch.
pub fn per_class_csv(runs: &[Vec<EpochMetrics>]) -> Result<String> {
    let best = best_records(runs)?;
    let k = class_count(&best)?;
    let mut out = format!("class,{}\n", value_header("accuracy", runs.len()));
    for c in 0..k {
        let values: Vec<f64> = best.iter().map(|m| m.acc_per_class[c]).collect();
        let _ = writeln!(out, "{c},{}", value_cells(&values));
    }
    Ok(out)
}

/// Confusion matrix (rows: true class, columns: predicted) at each run's
/// best epoch, averaged over runs.
pub fn confusion_csv(runs: &[Vec<EpochMetrics>]) -> Result<String> {
    let best = best_records(runs)?;
    let k = class_count(&best)?;
    let mut out = String::from("true");
    for c in 0..k {
        let _ = write!(out, ",pred_{c}");
    }
    out.push('\n');
    let n = best.len() as f64;
    for r in 0..k {
        let _ = write!(out, "{r}");
        for c in 0..k {
            let sum: usize = best.iter().map(|m| m.confusion[r].get(c).copied().unwrap_or(0)).sum();
            let _ = write!(out, ",{}", sum as f64 / n);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes the four CSVs into `out_dir` and returns their paths.
pub fn write_report(runs: &[Vec<EpochMetrics>], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(Error::invalid("report needs at least one metrics stream"));
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (MASK_PROB_CSV, epoch_series_csv(runs, "mask_prob", |m| m.mask_prob)),
        (USED_ACC_CSV, epoch_series_csv(runs, "used_acc", |m| m.used_acc)),
        (PER_CLASS_CSV, per_class_csv(runs)?),
        (CONFUSION_CSV, confusion_csv(runs)?),
    ];
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
