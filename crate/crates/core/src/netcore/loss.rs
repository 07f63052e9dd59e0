use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::net::PredictionBatch;
use crate::error::{shape_err, Error, Result};

/// Added inside the log of the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

/// A batch of target distributions, one row per example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabels(Array2<f64>);

impl SoftLabels {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        for (i, row) in rows.outer_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Input(format!("soft label {i} has a negative or non-finite entry")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("soft label {i} sums to {s}")));
            }
        }
        Ok(Self(rows))
    }

    pub(crate) fn new_unchecked(rows: Array2<f64>) -> Self {
        Self(rows)
    }

    /// One-hot rows.
    pub fn from_hard(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut rows = Array2::zeros((labels.len(), n_classes));
        for (i, &y) in labels.iter().enumerate() {
            if y >= n_classes {
                return Err(Error::OutOfRange { index: y, len: n_classes });
            }
            rows[[i, y]] = 1.0;
        }
        Ok(Self(rows))
    }

    pub fn as_array(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }
}

/// Mean over the batch of `−Σ_c y_c ln(p_c + ε)`.
pub fn soft_cross_entropy(pred: &PredictionBatch, target: &SoftLabels) -> Result<f64> {
    cross_entropy_rows(pred.probs(), target.as_array())
}

pub(crate) fn cross_entropy_rows(probs: &Array2<f64>, target: ArrayView2<f64>) -> Result<f64> {
    if probs.dim() != target.dim() {
        return shape_err(format!("predictions {:?} vs targets {:?}", probs.dim(), target.dim()));
    }
    if probs.nrows() == 0 {
        return shape_err("empty batch");
    }
    let total: f64 = probs
        .iter()
        .zip(target.iter())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * (p + LOG_EPS).ln())
        .sum();
    Ok(total / probs.nrows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn batch(p: Array2<f64>) -> PredictionBatch {
        PredictionBatch::from_probs(p).unwrap()
    }

    #[test]
    fn matching_one_hot_is_zero() {
        let p = batch(array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        let y = SoftLabels::from_hard(&[0, 2], 3).unwrap();
        assert!(soft_cross_entropy(&p, &y).unwrap().abs() < 1e-11);
    }

    #[test]
    fn uniform_over_five_is_ln5() {
        let p = batch(Array2::from_elem((3, 5), 0.2));
        let y = SoftLabels::from_hard(&[0, 3, 4], 5).unwrap();
        let l = soft_cross_entropy(&p, &y).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-10);
        assert!((l - 1.6094).abs() < 1e-4);
    }

    #[test]
    fn mixed_target_half_half() {
        let p = batch(array![[0.5, 0.5]]);
        let y = SoftLabels::new(array![[0.7, 0.3]]).unwrap();
        let l = soft_cross_entropy(&p, &y).unwrap();
        let hand = -0.7 * 0.5f64.ln() - 0.3 * 0.5f64.ln();
        assert!((l - hand).abs() < 1e-10);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(SoftLabels::new(array![[0.6, 0.6]]).is_err());
        assert!(SoftLabels::new(array![[1.2, -0.2]]).is_err());
        assert!(SoftLabels::from_hard(&[3], 3).is_err());
        let p = batch(array![[0.5, 0.5]]);
        let y = SoftLabels::from_hard(&[0], 3).unwrap();
        assert!(matches!(soft_cross_entropy(&p, &y), Err(Error::Shape(_))));
    }
}
