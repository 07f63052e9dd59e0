use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::{ace, bin_predictions, ece, nll, reliability_data, sce, tace, BinStats, ReliabilityPoint};
use crate::augment::{class_stats, ConfReading};
use crate::error::Result;
use crate::netcore::PredictionBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub n_bins: usize,
    pub tace_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { n_bins: 15, tace_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub ece: f64,
    pub ace: f64,
    pub sce: f64,
    pub tace: f64,
    pub nll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGap {
    pub class: usize,
    pub count: usize,
    pub accuracy: f64,
    pub confidence: f64,
    /// `accuracy − confidence`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub metrics: Metrics,
    pub bins: BinStats,
    pub per_class: Vec<ClassGap>,
    pub fitted_temperature: Option<f64>,
}

impl CalibrationReport {
    /// ACE falls back to one bin per prediction when there are fewer
    /// predictions than bins.
    pub fn compute(preds: &PredictionBatch, labels: &[usize], opts: &ReportOptions) -> Result<Self> {
        let bins = bin_predictions(preds, labels, opts.n_bins)?;
        let conf = preds.confidence();
        let stats = class_stats(preds, labels, ConfReading::MaxProb)?;
        let per_class = (0..preds.n_classes())
            .map(|c| ClassGap {
                class: c,
                count: stats.counts[c],
                accuracy: stats.accuracy[c],
                confidence: stats.confidence[c],
                gap: stats.accuracy[c] - stats.confidence[c],
            })
            .collect();
        Ok(Self {
            metrics: Metrics {
                accuracy: preds.accuracy(labels),
                mean_confidence: conf.iter().sum::<f64>() / conf.len() as f64,
                ece: ece(&bins)?,
                ace: ace(preds, labels, opts.n_bins.min(preds.len()))?,
                sce: sce(preds, labels, opts.n_bins)?,
                tace: tace(preds, labels, opts.n_bins, opts.tace_threshold)?,
                nll: nll(preds, labels)?,
            },
            bins,
            per_class,
            fitted_temperature: None,
        })
    }

    pub fn reliability(&self) -> Vec<ReliabilityPoint> {
        reliability_data(&self.bins)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn write_reliability_csv<W: Write>(points: &[ReliabilityPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_reliability_csv<R: Read>(r: R) -> Result<Vec<ReliabilityPoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> (PredictionBatch, Vec<usize>) {
        let p = PredictionBatch::from_probs(array![
            [0.7, 0.2, 0.1],
            [0.1, 0.6, 0.3],
            [0.3, 0.3, 0.4],
            [0.05, 0.9, 0.05],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
        ])
        .unwrap();
        (p, vec![0, 1, 1, 1, 2])
    }

    #[test]
    fn json_keys_and_round_trip() {
        let (p, y) = sample();
        let mut r = CalibrationReport::compute(&p, &y, &ReportOptions::default()).unwrap();
        r.fitted_temperature = Some(0.8123456789);
        let s = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["metrics"]["ece"].is_number());
        assert_eq!(v["bins"].as_array().unwrap().len(), 15);
        assert_eq!(v["per_class"].as_array().unwrap().len(), 3);
        assert_eq!(CalibrationReport::from_json(&s).unwrap(), r);
    }

    #[test]
    fn metrics_non_negative() {
        let (p, y) = sample();
        let m = CalibrationReport::compute(&p, &y, &ReportOptions::default()).unwrap().metrics;
        for v in [m.ece, m.ace, m.sce, m.tace, m.nll] {
            assert!(v >= 0.0);
        }
        assert!(m.ece <= 1.0);
    }

    #[test]
    fn reliability_csv_round_trip() {
        let (p, y) = sample();
        let r = CalibrationReport::compute(&p, &y, &ReportOptions::default()).unwrap();
        let pts = r.reliability();
        let mut buf = Vec::new();
        write_reliability_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("bin_mid,gap,count"));
        assert_eq!(read_reliability_csv(&buf[..]).unwrap(), pts);
    }
}
