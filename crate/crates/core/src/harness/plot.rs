use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{read_csv, write_csv};
use super::run::{load_manifest, load_records, RunStatus};
use crate::calibration::ReliabilityPoint;
use crate::ensembles::PolicyRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Reliability,
    ShiftCurve,
    PolicyCounts,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Reliability => "reliability",
            PlotKind::ShiftCurve => "shift_curve",
            PlotKind::PolicyCounts => "policy_counts",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "reliability" => Ok(PlotKind::Reliability),
            "shift_curve" => Ok(PlotKind::ShiftCurve),
            "policy_counts" => Ok(PlotKind::PolicyCounts),
            _ => Err(Error::Config(format!(
                "unknown plot kind {s:?}; expected reliability, shift_curve or policy_counts"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin_mid: f64,
    pub gap: f64,
    pub count: usize,
    pub strategy: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyCountRow {
    pub strategy: String,
    pub seed: u64,
    pub class: usize,
    pub epochs_enabled: usize,
    pub total_epochs: usize,
}

/// Mean accuracy and ECE per cell at one intensity (0 = clean), over seeds and families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPoint {
    pub intensity: usize,
    pub cell: String,
    pub accuracy: f64,
    pub ece: f64,
}

pub fn reliability_rows(dir: &Path) -> Result<Vec<ReliabilityRow>> {
    let mut rows = Vec::new();
    for e in load_manifest(dir)?.records.iter().filter(|e| e.status == RunStatus::Ok) {
        let pts: Vec<ReliabilityPoint> = read_csv(&dir.join(&e.dir).join("reliability.csv"))?;
        rows.extend(pts.into_iter().map(|p| ReliabilityRow {
            bin_mid: p.bin_mid,
            gap: p.gap,
            count: p.count,
            strategy: e.cell.clone(),
            seed: e.seed,
        }));
    }
    Ok(rows)
}

pub fn policy_counts(dir: &Path) -> Result<Vec<PolicyCountRow>> {
    let manifest = load_manifest(dir)?;
    let mut rows = Vec::new();
    for e in manifest.records.iter().filter(|e| e.status == RunStatus::Ok) {
        let path = dir.join(&e.dir).join("policy.csv");
        if !path.exists() {
            continue;
        }
        let log: Vec<PolicyRow> = read_csv(&path)?;
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for r in &log {
            *counts.entry(r.class).or_default() += usize::from(r.enabled);
        }
        rows.extend(counts.into_iter().map(|(class, n)| PolicyCountRow {
            strategy: e.cell.clone(),
            seed: e.seed,
            class,
            epochs_enabled: n,
            total_epochs: manifest.epochs,
        }));
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("no policy logs under {}", dir.display())));
    }
    Ok(rows)
}

pub fn shift_curve(dir: &Path) -> Result<Vec<ShiftPoint>> {
    let records = load_records(dir)?;
    let mut cells: Vec<String> = Vec::new();
    for r in &records {
        if !cells.contains(&r.cell) {
            cells.push(r.cell.clone());
        }
    }
    let mut points = Vec::new();
    for intensity in 0..=5 {
        for cell in &cells {
            let ok = records.iter().filter(|r| &r.cell == cell && r.is_ok());
            let vals: Vec<(f64, f64)> = if intensity == 0 {
                ok.filter_map(|r| r.clean.map(|m| (m.accuracy, m.ece))).collect()
            } else {
                ok.flat_map(|r| r.corrupted.iter().filter(|c| c.intensity == intensity).map(|c| (c.accuracy, c.ece)))
                    .collect()
            };
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            points.push(ShiftPoint {
                intensity,
                cell: cell.clone(),
                accuracy: vals.iter().map(|v| v.0).sum::<f64>() / n,
                ece: vals.iter().map(|v| v.1).sum::<f64>() / n,
            });
        }
    }
    Ok(points)
}

/// Writes `plot-<kind>.csv` into `dir` and returns its path.
///
/// The shift curve is written wide: one row per intensity, `<cell>_acc` and
/// `<cell>_ece` columns per cell.
pub fn emit_plot_data(dir: &Path, kind: PlotKind) -> Result<PathBuf> {
    let path = dir.join(format!("plot-{}.csv", kind.name()));
    match kind {
        PlotKind::Reliability => write_csv(&path, &reliability_rows(dir)?)?,
        PlotKind::PolicyCounts => write_csv(&path, &policy_counts(dir)?)?,
        PlotKind::ShiftCurve => {
            let points = shift_curve(dir)?;
            let mut cells: Vec<&str> = Vec::new();
            for p in &points {
                if !cells.contains(&p.cell.as_str()) {
                    cells.push(&p.cell);
                }
            }
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["intensity".to_string()];
            for c in &cells {
                header.extend([format!("{c}_acc"), format!("{c}_ece")]);
            }
            w.write_record(&header)?;
            for intensity in 0..=5 {
                let mut rec = vec![intensity.to_string()];
                for c in &cells {
                    match points.iter().find(|p| p.intensity == intensity && p.cell == *c) {
                        Some(p) => rec.extend([p.accuracy.to_string(), p.ece.to_string()]),
                        None => rec.extend([String::new(), String::new()]),
                    }
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(path)
}
