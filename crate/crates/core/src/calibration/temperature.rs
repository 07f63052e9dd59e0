use ndarray::Array2;

use crate::error::{Error, Result};
use crate::netcore::{softmax_rows, PredictionBatch};

const LOG_T_RANGE: (f64, f64) = (-3.0, 3.0);
const GRID_STEP: f64 = 0.05;
const TOLERANCE: f64 = 1e-4;

/// Log-probabilities usable as logits, for models that only expose
/// (aggregated) probabilities.
pub fn log_scores(preds: &PredictionBatch) -> Array2<f64> {
    preds.probs().mapv(|p| p.max(f64::MIN_POSITIVE).ln())
}

/// `softmax(scores / t)`.
pub fn apply_temperature(scores: &Array2<f64>, t: f64) -> Result<PredictionBatch> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("temperature must be positive, got {t}")));
    }
    Ok(PredictionBatch::from_probs_unchecked(softmax_rows(&scores.mapv(|z| z / t))))
}

/// Mean NLL of `softmax(scores / t)` via log-sum-exp.
pub fn scaled_nll(scores: &Array2<f64>, labels: &[usize], t: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in scores.outer_iter().zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / t));
        let lse = max + row.iter().map(|&v| (v / t - max).exp()).sum::<f64>().ln();
        total += lse - row[y] / t;
    }
    total / labels.len() as f64
}

/// Temperature minimizing validation NLL: a grid over `log T ∈ [−3, 3]`
/// followed by golden-section refinement around the best grid point. Never
/// returns a temperature worse than `T = 1` on the fitting data.
pub fn temperature_fit(scores: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    if scores.nrows() == 0 {
        return Err(Error::Metric("no validation predictions".into()));
    }
    if labels.len() != scores.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), scores.nrows())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= scores.ncols()) {
        return Err(Error::OutOfRange { index: y, len: scores.ncols() });
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::Input("validation set holds a single class".into()));
    }
    let f = |log_t: f64| scaled_nll(scores, labels, log_t.exp());

    let steps = ((LOG_T_RANGE.1 - LOG_T_RANGE.0) / GRID_STEP).round() as usize;
    let (mut best, mut best_val) = (0.0, f(0.0));
    for i in 0..=steps {
        let u = LOG_T_RANGE.0 + i as f64 * GRID_STEP;
        let v = f(u);
        if v < best_val {
            best = u;
            best_val = v;
        }
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut lo = (best - GRID_STEP).max(LOG_T_RANGE.0);
    let mut hi = (best + GRID_STEP).min(LOG_T_RANGE.1);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > TOLERANCE {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    for (u, v) in [(c, fc), (d, fd)] {
        if v < best_val {
            best = u;
            best_val = v;
        }
    }
    if !(best_val <= f(0.0)) {
        return Ok(1.0);
    }
    Ok(best.exp())
}
