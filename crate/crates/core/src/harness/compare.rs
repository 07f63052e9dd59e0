use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{load_records, RunRecord};
use crate::ensembles::EnsembleMode;
use crate::error::{Error, Result};

/// Metric columns in table order.
pub const METRICS: [&str; 11] = [
    "acc", "ece", "ace", "sce", "tace", "nll", "gap", "temperature", "ts_ece", "c_acc", "c_ece",
];

fn metric(r: &RunRecord, name: &str) -> Option<f64> {
    let m = r.clean.as_ref();
    match name {
        "acc" => m.map(|m| m.accuracy),
        "ece" => m.map(|m| m.ece),
        "ace" => m.map(|m| m.ace),
        "sce" => m.map(|m| m.sce),
        "tace" => m.map(|m| m.tace),
        "nll" => m.map(|m| m.nll),
        "gap" => m.map(|m| m.accuracy - m.mean_confidence),
        "temperature" => r.temperature.map(|t| t.temperature),
        "ts_ece" => r.temperature.map(|t| t.test.ece),
        "c_acc" => r.c_acc,
        "c_ece" => r.c_ece,
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub mode: EnsembleMode,
    pub strategy: String,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Parallel to [`METRICS`]; `None` marks an absent metric.
    pub stats: Vec<Option<Stat>>,
}

impl SummaryRow {
    pub fn get(&self, name: &str) -> Option<Stat> {
        METRICS.iter().position(|m| *m == name).and_then(|i| self.stats[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: String,
    pub rows: Vec<SummaryRow>,
}

fn stat(values: &[f64]) -> Stat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Stat { mean, std, delta: None }
}

/// Per-cell mean ± std of every metric, with deltas against `baseline`.
///
/// `baseline` names a cell; failing that, a strategy label, in which case each
/// cell is compared with the cell of the same ensemble mode using that strategy.
pub fn compare(records: &[RunRecord], baseline: &str) -> Result<Summary> {
    let first = records.first().ok_or_else(|| Error::Input("no records to compare".into()))?;
    if records.iter().any(|r| r.dataset_hash != first.dataset_hash) {
        return Err(Error::Input("records were produced on different datasets".into()));
    }
    let mut cells: Vec<&str> = Vec::new();
    for r in records {
        if !cells.contains(&r.cell.as_str()) {
            cells.push(&r.cell);
        }
    }
    let mut rows: Vec<SummaryRow> = cells
        .iter()
        .map(|&cell| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.cell == cell).collect();
            let ok: Vec<&RunRecord> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let stats = METRICS
                .iter()
                .map(|m| {
                    let vals: Option<Vec<f64>> = ok.iter().map(|r| metric(r, m)).collect();
                    vals.filter(|v| !v.is_empty()).map(|v| stat(&v))
                })
                .collect();
            SummaryRow {
                cell: cell.to_string(),
                mode: group[0].mode,
                strategy: group[0].strategy.clone(),
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
                stats,
            }
        })
        .collect();

    let base_for = |row: &SummaryRow| -> Option<usize> {
        rows.iter()
            .position(|b| b.cell == baseline)
            .or_else(|| rows.iter().position(|b| b.mode == row.mode && b.strategy == baseline))
    };
    let bases: Vec<Option<usize>> = rows.iter().map(base_for).collect();
    if bases.iter().all(Option::is_none) {
        return Err(Error::Config(format!("baseline {baseline:?} matches no cell or strategy")));
    }
    let snapshot = rows.clone();
    for (row, base) in rows.iter_mut().zip(bases) {
        let Some(b) = base else { continue };
        for (s, bs) in row.stats.iter_mut().zip(&snapshot[b].stats) {
            if let (Some(s), Some(bs)) = (s.as_mut(), bs) {
                s.delta = Some(s.mean - bs.mean);
            }
        }
    }
    Ok(Summary { baseline: baseline.to_string(), rows })
}

impl Summary {
    /// Aligned plain-text table; absent metrics print as `absent`.
    pub fn to_text(&self) -> String {
        let mut header = vec!["cell".to_string(), "n".to_string()];
        header.extend(METRICS.iter().map(|m| m.to_string()));
        let mut table = vec![header];
        for r in &self.rows {
            let mut line = vec![r.cell.clone(), format!("{}/{}", r.n_ok, r.n_ok + r.n_failed)];
            for s in &r.stats {
                line.push(match s {
                    Some(s) => match s.delta {
                        Some(d) => format!("{:.4}±{:.4} ({:+.4})", s.mean, s.std, d),
                        None => format!("{:.4}±{:.4}", s.mean, s.std),
                    },
                    None => "absent".into(),
                });
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("baseline: {}\n", self.baseline);
        for line in &table {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// CSV with `<metric>_mean`, `<metric>_std`, `<metric>_delta` columns; absent values are empty.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["cell", "mode", "strategy", "n_ok", "n_failed"].map(String::from).to_vec();
        for m in METRICS {
            header.extend([format!("{m}_mean"), format!("{m}_std"), format!("{m}_delta")]);
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.cell.clone(),
                r.mode.name().to_string(),
                r.strategy.clone(),
                r.n_ok.to_string(),
                r.n_failed.to_string(),
            ];
            for s in &r.stats {
                match s {
                    Some(s) => rec.extend([
                        s.mean.to_string(),
                        s.std.to_string(),
                        s.delta.map(|d| d.to_string()).unwrap_or_default(),
                    ]),
                    None => rec.extend([String::new(), String::new(), String::new()]),
                }
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Compares the records of one or more run directories and writes
/// `compare-<baseline>.txt` and `.csv` into the first.
pub fn compare_dirs(dirs: &[PathBuf], baseline: &str) -> Result<(Summary, PathBuf, PathBuf)> {
    let first: &Path = dirs.first().ok_or_else(|| Error::Input("no run directory given".into()))?;
    let mut records = Vec::new();
    for d in dirs {
        records.extend(load_records(d)?);
    }
    let summary = compare(&records, baseline)?;
    let txt = first.join(format!("compare-{baseline}.txt"));
    let csv_path = first.join(format!("compare-{baseline}.csv"));
    std::fs::write(&txt, summary.to_text())?;
    summary.write_csv(std::fs::File::create(&csv_path)?)?;
    Ok((summary, txt, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Metrics;
    use crate::harness::run::RunStatus;

    fn record(cell: &str, strategy: &str, seed: u64, ece: f64, shifted: bool) -> RunRecord {
        RunRecord {
            cell: cell.into(),
            mode: EnsembleMode::Deep,
            strategy: strategy.into(),
            seed,
            config_hash: "c".into(),
            dataset_hash: "d".into(),
            status: RunStatus::Ok,
            clean: Some(Metrics { accuracy: 0.9, mean_confidence: 0.8, ece, ace: ece, sce: ece, tace: ece, nll: 0.3 }),
            temperature: None,
            corrupted: Vec::new(),
            c_acc: shifted.then_some(0.7),
            c_ece: shifted.then_some(0.1),
        }
    }

    #[test]
    fn self_comparison_has_zero_deltas() {
        let recs = vec![record("deep-none", "none", 0, 0.05, true), record("deep-none", "none", 1, 0.07, true)];
        let s = compare(&recs, "deep-none").unwrap();
        assert_eq!(s.rows.len(), 1);
        for st in s.rows[0].stats.iter().flatten() {
            assert_eq!(st.delta, Some(0.0));
        }
        assert!((s.rows[0].get("ece").unwrap().mean - 0.06).abs() < 1e-12);
    }

    #[test]
    fn two_strategies_two_rows() {
        let recs = vec![record("deep-none", "none", 0, 0.05, true), record("deep-mixup", "mixup", 0, 0.09, true)];
        let s = compare(&recs, "none").unwrap();
        assert_eq!(s.rows.len(), 2);
        assert!((s.rows[1].get("ece").unwrap().delta.unwrap() - 0.04).abs() < 1e-12);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn missing_shift_marked_absent() {
        let recs = vec![record("deep-none", "none", 0, 0.05, false)];
        let s = compare(&recs, "deep-none").unwrap();
        assert!(s.rows[0].get("c_acc").is_none());
        assert!(s.to_text().contains("absent"));
    }

    #[test]
    fn mismatched_datasets_rejected() {
        let mut b = record("deep-none", "none", 1, 0.05, true);
        b.dataset_hash = "other".into();
        assert!(compare(&[record("deep-none", "none", 0, 0.05, true), b], "none").is_err());
        assert!(compare(&[record("deep-none", "none", 0, 0.05, true)], "nope").is_err());
    }
}
