use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::augmix::{augmixup_with, AugMixParams, AugmentOpSet};
use super::mixup::{check_pairable, draw_lambdas, draw_partners, interpolate, MixedBatch};
use crate::error::{Error, Result};
use crate::netcore::{PredictionBatch, SoftLabels};
use crate::rng::RngStream;

/// Which probability counts as an example's confidence when grouping by class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfReading {
    /// The maximum predicted probability.
    #[default]
    MaxProb,
    /// The probability assigned to the example's true class.
    ClassProb,
}

/// Accuracy and mean confidence of the examples whose true label is each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub accuracy: Vec<f64>,
    pub confidence: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ClassStats {
    /// `Acc(C_i) − Conf(C_i)`; positive means under-confident.
    pub fn gaps(&self) -> Vec<f64> {
        self.accuracy.iter().zip(&self.confidence).map(|(a, c)| a - c).collect()
    }
}

pub fn class_stats(preds: &PredictionBatch, labels: &[usize], reading: ConfReading) -> Result<ClassStats> {
    if labels.len() != preds.len() {
        return Err(Error::Shape(format!("{} labels for {} predictions", labels.len(), preds.len())));
    }
    let c = preds.n_classes();
    let mut correct = vec![0usize; c];
    let mut conf = vec![0.0; c];
    let mut counts = vec![0usize; c];
    let predicted = preds.predicted();
    let maxp = preds.confidence();
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::OutOfRange { index: y, len: c });
        }
        counts[y] += 1;
        if predicted[i] == y {
            correct[y] += 1;
        }
        conf[y] += match reading {
            ConfReading::MaxProb => maxp[i],
            ConfReading::ClassProb => preds.probs()[[i, y]],
        };
    }
    let div = |v: f64, n: usize| if n == 0 { 0.0 } else { v / n as f64 };
    Ok(ClassStats {
        accuracy: correct.iter().zip(&counts).map(|(&k, &n)| div(k as f64, n)).collect(),
        confidence: conf.iter().zip(&counts).map(|(&s, &n)| div(s, n)).collect(),
        counts,
    })
}

/// Per-class Mixup gates for confidence-adjusted Mixup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixupPolicy {
    pub per_class_enabled: Vec<bool>,
    /// Beta concentration used for enabled classes.
    pub a: f64,
    pub last_refresh_epoch: Option<usize>,
}

impl MixupPolicy {
    /// Every class enabled; this is the state before the first validation pass.
    pub fn all_enabled(n_classes: usize, a: f64) -> Self {
        Self {
            per_class_enabled: vec![true; n_classes],
            a,
            last_refresh_epoch: None,
        }
    }

    pub fn n_enabled(&self) -> usize {
        self.per_class_enabled.iter().filter(|&&e| e).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefreshOutcome {
    pub policy: MixupPolicy,
    pub stats: ClassStats,
    /// Classes without validation examples; their gates were left as they were.
    pub missing_classes: Vec<usize>,
}

/// Enables Mixup for class `i` iff `Acc(C_i) ≤ Conf(C_i)` on the validation predictions.
pub fn camixup_refresh(
    policy: &MixupPolicy,
    val_predictions: &PredictionBatch,
    val_labels: &[usize],
    epoch: usize,
    reading: ConfReading,
) -> Result<RefreshOutcome> {
    if policy.per_class_enabled.len() != val_predictions.n_classes() {
        return Err(Error::Shape(format!(
            "policy covers {} classes, predictions have {}",
            policy.per_class_enabled.len(),
            val_predictions.n_classes()
        )));
    }
    if let Some(last) = policy.last_refresh_epoch {
        if epoch < last {
            return Err(Error::Input(format!("refresh at epoch {epoch} after epoch {last}")));
        }
    }
    let stats = class_stats(val_predictions, val_labels, reading)?;
    let mut next = policy.clone();
    let mut missing = Vec::new();
    for (i, flag) in next.per_class_enabled.iter_mut().enumerate() {
        if stats.counts[i] == 0 {
            log::warn!("class {i} has no validation examples; keeping its Mixup gate");
            missing.push(i);
            continue;
        }
        *flag = stats.accuracy[i] <= stats.confidence[i];
    }
    next.last_refresh_epoch = Some(epoch);
    Ok(RefreshOutcome {
        policy: next,
        stats,
        missing_classes: missing,
    })
}

fn gated_lambdas(labels: &[usize], policy: &MixupPolicy, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut lambdas = draw_lambdas(labels.len(), policy.a, rng)?;
    for (l, &y) in lambdas.iter_mut().zip(labels) {
        let enabled = *policy
            .per_class_enabled
            .get(y)
            .ok_or(Error::OutOfRange { index: y, len: policy.per_class_enabled.len() })?;
        if !enabled {
            *l = 1.0;
        }
    }
    Ok(lambdas)
}

/// Mixup gated on the anchor example's class: disabled classes pass through as `(x_i, y_i)`.
pub fn camixup_apply(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    labels: &[usize],
    policy: &MixupPolicy,
    rng: &mut RngStream,
) -> Result<MixedBatch> {
    check_pairable(&x, y)?;
    if labels.len() != x.nrows() {
        return Err(Error::Shape("labels and inputs differ in length".into()));
    }
    if policy.per_class_enabled.len() != y.n_classes() {
        return Err(Error::Shape("policy length differs from class count".into()));
    }
    let partners = draw_partners(x.nrows(), rng);
    let lambdas = gated_lambdas(labels, policy, rng)?;
    Ok(interpolate(x, y, partners, lambdas))
}

/// AugMix followed by class-gated Mixup; disabled classes keep their AugMix
/// input and their original label.
pub fn augcamixup_apply(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    labels: &[usize],
    policy: &MixupPolicy,
    opset: &AugmentOpSet,
    params: &AugMixParams,
    rng: &mut RngStream,
) -> Result<MixedBatch> {
    check_pairable(&x, y)?;
    let partners = draw_partners(x.nrows(), rng);
    let lambdas = gated_lambdas(labels, policy, rng)?;
    augmixup_with(x, y, opset, params, partners, lambdas, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::mixup_batch;
    use crate::rng::stream;
    use ndarray::array;

    fn preds(rows: ndarray::Array2<f64>) -> PredictionBatch {
        PredictionBatch::from_probs(rows).unwrap()
    }

    #[test]
    fn under_confident_class_disabled() {
        // Class 0: all correct at confidence 0.9 (Acc 1.0 > Conf 0.9).
        // Class 1: Acc 0.6, Conf 0.9.
        let mut rows = vec![];
        let mut labels = vec![];
        for _ in 0..10 {
            rows.push([0.9, 0.1]);
            labels.push(0);
        }
        for i in 0..10 {
            rows.push(if i < 6 { [0.1, 0.9] } else { [0.9, 0.1] });
            labels.push(1);
        }
        let p = preds(ndarray::Array2::from(rows));
        let out = camixup_refresh(&MixupPolicy::all_enabled(2, 1.0), &p, &labels, 0, ConfReading::MaxProb).unwrap();
        assert!((out.stats.accuracy[0] - 1.0).abs() < 1e-12);
        assert!((out.stats.accuracy[1] - 0.6).abs() < 1e-12);
        assert!((out.stats.confidence[1] - 0.9).abs() < 1e-12);
        assert_eq!(out.policy.per_class_enabled, vec![false, true]);
        assert_eq!(out.policy.last_refresh_epoch, Some(0));
    }

    #[test]
    fn tie_enables() {
        // Acc = Conf = 1.0 for class 0.
        let mut policy = MixupPolicy::all_enabled(2, 1.0);
        policy.per_class_enabled[0] = false;
        let p = preds(array![[1.0, 0.0]]);
        let out = camixup_refresh(&policy, &p, &[0], 0, ConfReading::MaxProb).unwrap();
        assert!(out.policy.per_class_enabled[0]);
        assert_eq!(out.missing_classes, vec![1]);
    }

    #[test]
    fn missing_class_keeps_flag() {
        let mut policy = MixupPolicy::all_enabled(3, 1.0);
        policy.per_class_enabled[2] = false;
        let p = preds(array![[0.6, 0.2, 0.2], [0.2, 0.6, 0.2]]);
        let out = camixup_refresh(&policy, &p, &[0, 1], 1, ConfReading::MaxProb).unwrap();
        assert!(!out.policy.per_class_enabled[2]);
        assert_eq!(out.missing_classes, vec![2]);
        assert!(camixup_refresh(&out.policy, &p, &[0, 1], 0, ConfReading::MaxProb).is_err());
    }

    #[test]
    fn class_prob_reading() {
        let p = preds(array![[0.7, 0.3], [0.8, 0.2]]);
        let s = class_stats(&p, &[1, 1], ConfReading::ClassProb).unwrap();
        assert!((s.confidence[1] - 0.25).abs() < 1e-12);
        let s = class_stats(&p, &[1, 1], ConfReading::MaxProb).unwrap();
        assert!((s.confidence[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_disabled_is_passthrough() {
        let x = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0]];
        let y = SoftLabels::from_hard(&[0, 1, 2], 3).unwrap();
        let policy = MixupPolicy { per_class_enabled: vec![false; 3], a: 1.0, last_refresh_epoch: None };
        let out = camixup_apply(x.view(), &y, &[0, 1, 2], &policy, &mut stream(1, &[])).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.targets, y);
    }

    #[test]
    fn all_enabled_matches_mixup() {
        let x = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0], [3.0, 3.0]];
        let y = SoftLabels::from_hard(&[0, 1, 2, 0], 3).unwrap();
        let policy = MixupPolicy::all_enabled(3, 0.7);
        let a = camixup_apply(x.view(), &y, &[0, 1, 2, 0], &policy, &mut stream(9, &[])).unwrap();
        let b = mixup_batch(x.view(), &y, 0.7, &mut stream(9, &[]), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_policy_labels() {
        let x = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0], [3.0, 3.0]];
        let labels = [0, 1, 0, 1];
        let y = SoftLabels::from_hard(&labels, 2).unwrap();
        let policy = MixupPolicy { per_class_enabled: vec![false, true], a: 1.0, last_refresh_epoch: None };
        for seed in 0..10 {
            let out = camixup_apply(x.view(), &y, &labels, &policy, &mut stream(seed, &[])).unwrap();
            let t = out.targets.as_array();
            for (i, &l) in labels.iter().enumerate() {
                if l == 0 {
                    assert_eq!(t.row(i), y.as_array().row(i));
                    assert_eq!(out.x.row(i), x.row(i));
                } else {
                    assert!((t.row(i).sum() - 1.0).abs() < 1e-12);
                    assert!(t.row(i).iter().filter(|&&v| v != 0.0).count() <= 2);
                }
            }
        }
    }
}
