use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{PredictionBatch, LOG_EPS};

/// One confidence bin with interval `(lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub correct: usize,
    /// Sum of confidences of the members, in example order.
    pub conf_sum: f64,
}

impl Bin {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }

    pub fn confidence(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.conf_sum / self.count as f64
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn gap(&self) -> f64 {
        (self.accuracy() - self.confidence()).abs()
    }
}

/// Equal-width confidence bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinStats {
    pub bins: Vec<Bin>,
}

impl BinStats {
    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// Total predictions across bins.
    pub fn n(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Zero-based index of the bin `((m−1)/M, m/M]` holding `conf`; a confidence
/// of exactly 0 goes to the first bin.
pub fn bin_index(conf: f64, n_bins: usize) -> usize {
    if conf <= 0.0 {
        return 0;
    }
    let m = n_bins as f64;
    let mut b = ((conf * m).ceil() as usize).clamp(1, n_bins);
    // Settle rounding in `conf * m` against the interval edges as written.
    while b > 1 && conf <= (b - 1) as f64 / m {
        b -= 1;
    }
    while b < n_bins && conf > b as f64 / m {
        b += 1;
    }
    b - 1
}

fn check_labels(preds: &PredictionBatch, labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Metric("empty prediction set".into()));
    }
    if labels.len() != preds.len() {
        return Err(Error::Shape(format!("{} labels for {} predictions", labels.len(), preds.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= preds.n_classes()) {
        return Err(Error::OutOfRange { index: y, len: preds.n_classes() });
    }
    Ok(())
}

pub fn bin_predictions(preds: &PredictionBatch, labels: &[usize], n_bins: usize) -> Result<BinStats> {
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    check_labels(preds, labels)?;
    let m = n_bins as f64;
    let mut bins: Vec<Bin> = (1..=n_bins)
        .map(|k| Bin {
            lower: (k - 1) as f64 / m,
            upper: k as f64 / m,
            count: 0,
            correct: 0,
            conf_sum: 0.0,
        })
        .collect();
    for ((conf, pred), &y) in preds.confidence().into_iter().zip(preds.predicted()).zip(labels) {
        let b = &mut bins[bin_index(conf, n_bins)];
        b.count += 1;
        b.conf_sum += conf;
        if pred == y {
            b.correct += 1;
        }
    }
    Ok(BinStats { bins })
}

/// `Σ_m (|B_m| / n) · |Acc(B_m) − Conf(B_m)|`.
pub fn ece(bins: &BinStats) -> Result<f64> {
    let n = bins.n();
    if n == 0 {
        return Err(Error::Metric("ECE of zero predictions".into()));
    }
    Ok(weighted_gap(bins.bins.iter(), n))
}

fn weighted_gap<'a>(bins: impl Iterator<Item = &'a Bin>, n: usize) -> f64 {
    let n = n as f64;
    bins.filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * b.gap())
        .sum()
}

/// Splits `sorted` (already ordered) into `n_bins` contiguous runs whose sizes differ by at most one.
fn equal_count_ranges(len: usize, n_bins: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n_bins).map(move |b| (b * len / n_bins)..((b + 1) * len / n_bins))
}

/// Bins holding equal numbers of predictions, ordered by confidence.
pub fn adaptive_bins(preds: &PredictionBatch, labels: &[usize], n_bins: usize) -> Result<Vec<Bin>> {
    check_labels(preds, labels)?;
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    if preds.len() < n_bins {
        return Err(Error::Metric(format!("{} predictions cannot fill {n_bins} equal-count bins", preds.len())));
    }
    let conf = preds.confidence();
    let hit: Vec<bool> = preds.predicted().iter().zip(labels).map(|(p, y)| p == y).collect();
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]));
    Ok(equal_count_ranges(order.len(), n_bins)
        .map(|r| {
            let members = &order[r];
            Bin {
                lower: members.first().map_or(0.0, |&i| conf[i]),
                upper: members.last().map_or(0.0, |&i| conf[i]),
                count: members.len(),
                correct: members.iter().filter(|&&i| hit[i]).count(),
                conf_sum: members.iter().map(|&i| conf[i]).sum(),
            }
        })
        .collect())
}

/// Adaptive calibration error: ECE over equal-count bins.
pub fn ace(preds: &PredictionBatch, labels: &[usize], n_bins: usize) -> Result<f64> {
    let bins = adaptive_bins(preds, labels, n_bins)?;
    Ok(weighted_gap(bins.iter(), preds.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    EqualWidth,
    EqualCount,
}

/// Weighted gap of one class: `probs` are class-c probabilities, `hits` whether the label is c.
fn class_term(mut items: Vec<(f64, bool)>, n_bins: usize, binning: Binning) -> f64 {
    let n = items.len();
    if n == 0 {
        return 0.0;
    }
    let bins: Vec<Bin> = match binning {
        Binning::EqualWidth => {
            let mut bins = vec![
                Bin { lower: 0.0, upper: 0.0, count: 0, correct: 0, conf_sum: 0.0 };
                n_bins
            ];
            for (p, hit) in items {
                let b = &mut bins[bin_index(p, n_bins)];
                b.count += 1;
                b.conf_sum += p;
                b.correct += usize::from(hit);
            }
            bins
        }
        Binning::EqualCount => {
            items.sort_by(|a, b| a.0.total_cmp(&b.0));
            equal_count_ranges(n, n_bins.min(n))
                .map(|r| {
                    let s = &items[r];
                    Bin {
                        lower: s.first().map_or(0.0, |v| v.0),
                        upper: s.last().map_or(0.0, |v| v.0),
                        count: s.len(),
                        correct: s.iter().filter(|v| v.1).count(),
                        conf_sum: s.iter().map(|v| v.0).sum(),
                    }
                })
                .collect()
        }
    };
    weighted_gap(bins.iter(), n)
}

/// Static calibration error: every class probability is binned per class and
/// the per-class weighted gaps are averaged.
pub fn sce(preds: &PredictionBatch, labels: &[usize], n_bins: usize) -> Result<f64> {
    sce_with(preds, labels, n_bins, Binning::EqualWidth)
}

pub fn sce_with(preds: &PredictionBatch, labels: &[usize], n_bins: usize, binning: Binning) -> Result<f64> {
    check_labels(preds, labels)?;
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let c = preds.n_classes();
    let p = preds.probs();
    let total: f64 = (0..c)
        .map(|k| {
            let items = (0..preds.len()).map(|i| (p[[i, k]], labels[i] == k)).collect();
            class_term(items, n_bins, binning)
        })
        .sum();
    Ok(total / c as f64)
}

/// Thresholded adaptive calibration error: like SCE with equal-count bins,
/// keeping only class probabilities above `threshold`. Classes with no
/// surviving probability are left out of the average.
pub fn tace(preds: &PredictionBatch, labels: &[usize], n_bins: usize, threshold: f64) -> Result<f64> {
    check_labels(preds, labels)?;
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} not in [0, 1)")));
    }
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let p = preds.probs();
    let mut total = 0.0;
    let mut classes = 0;
    for k in 0..preds.n_classes() {
        let items: Vec<(f64, bool)> = (0..preds.len())
            .filter(|&i| p[[i, k]] > threshold)
            .map(|i| (p[[i, k]], labels[i] == k))
            .collect();
        if items.is_empty() {
            continue;
        }
        total += class_term(items, n_bins, Binning::EqualCount);
        classes += 1;
    }
    if classes == 0 {
        return Err(Error::Metric(format!("no class probability exceeds threshold {threshold}")));
    }
    Ok(total / classes as f64)
}

/// Number of class probabilities strictly above `threshold`.
pub fn count_above(preds: &PredictionBatch, threshold: f64) -> usize {
    preds.probs().iter().filter(|&&v| v > threshold).count()
}

/// Mean negative log-likelihood of the true labels.
pub fn nll(preds: &PredictionBatch, labels: &[usize]) -> Result<f64> {
    check_labels(preds, labels)?;
    let p = preds.probs();
    let s: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -(p[[i, y]] + LOG_EPS).ln())
        .sum();
    Ok(s / labels.len() as f64)
}

/// One point of a reliability diagram; `gap = Acc − Conf` (positive: under-confident).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub bin_mid: f64,
    pub gap: f64,
    pub count: usize,
}

pub fn reliability_data(bins: &BinStats) -> Vec<ReliabilityPoint> {
    bins.bins
        .iter()
        .map(|b| ReliabilityPoint {
            bin_mid: b.midpoint(),
            gap: if b.count == 0 { 0.0 } else { b.accuracy() - b.confidence() },
            count: b.count,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn two_class(conf: &[f64]) -> PredictionBatch {
        let rows: Vec<[f64; 2]> = conf.iter().map(|&c| [c, 1.0 - c]).collect();
        PredictionBatch::from_probs(Array2::from(rows)).unwrap()
    }

    #[test]
    fn bin_of_093() {
        assert_eq!(bin_index(0.93, 15), 13);
        assert_eq!(bin_index(1.0, 15), 14);
        assert_eq!(bin_index(0.0, 15), 0);
        // 0.2 lies on the edge 3/15 and belongs to the third bin.
        assert_eq!(bin_index(0.2, 15), 2);
        for k in 1..=15 {
            let edge = k as f64 / 15.0;
            assert_eq!(bin_index(edge, 15), k - 1);
        }
    }

    #[test]
    fn single_bin() {
        let p = two_class(&[0.6, 0.9, 0.7]);
        let b = bin_predictions(&p, &[0, 0, 1], 1).unwrap();
        assert_eq!(b.bins[0].count, 3);
        assert!((b.bins[0].confidence() - (0.6 + 0.9 + 0.7) / 3.0).abs() < 1e-15);
        let e = ece(&b).unwrap();
        assert!((e - (2.0f64 / 3.0 - 2.2 / 3.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn perfect_confident_predictions() {
        let p = two_class(&[1.0, 1.0]);
        let b = bin_predictions(&p, &[0, 0], 15).unwrap();
        assert_eq!(ece(&b).unwrap(), 0.0);
        assert_eq!(ace(&p, &[0, 0], 2).unwrap(), 0.0);
    }

    #[test]
    fn one_bin_acc_06_conf_08() {
        let p = two_class(&[0.8; 10]);
        let labels: Vec<usize> = (0..10).map(|i| if i < 6 { 0 } else { 1 }).collect();
        let b = bin_predictions(&p, &labels, 15).unwrap();
        assert!((ece(&b).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ace_hand_case() {
        let p = two_class(&[0.6, 0.7, 0.8, 0.9]);
        // Correctness (0, 1, 1, 1): the first example is labelled 1.
        let a = ace(&p, &[1, 0, 0, 0], 2).unwrap();
        assert!((a - 0.15).abs() < 1e-12);
        assert!(matches!(ace(&p, &[1, 0, 0, 0], 5), Err(Error::Metric(_))));
    }

    #[test]
    fn ace_bins_equal_when_divisible() {
        let conf: Vec<f64> = (0..12).map(|i| 0.5 + i as f64 / 30.0).collect();
        let p = two_class(&conf);
        let bins = adaptive_bins(&p, &[0; 12], 4).unwrap();
        assert!(bins.iter().all(|b| b.count == 3));
    }

    #[test]
    fn sce_prior_predictor() {
        // Constant prediction equal to the class frequencies.
        let p = PredictionBatch::from_probs(Array2::from(vec![[0.75, 0.25]; 4])).unwrap();
        let s = sce(&p, &[0, 0, 0, 1], 1).unwrap();
        assert!(s.abs() < 1e-12);
    }

    #[test]
    fn sce_binary_symmetric() {
        let p = two_class(&[0.9, 0.3, 0.6]);
        let labels = [0, 1, 1];
        let s = sce(&p, &labels, 10).unwrap();
        assert!(s >= 0.0);
        let c0 = class_term(vec![(0.9, true), (0.3, false), (0.6, false)], 10, Binning::EqualWidth);
        let c1 = class_term(vec![(0.1, false), (0.7, true), (0.4, true)], 10, Binning::EqualWidth);
        assert!((s - 0.5 * (c0 + c1)).abs() < 1e-15);
    }

    #[test]
    fn tace_threshold_zero_equals_adaptive_sce() {
        let p = PredictionBatch::from_probs(array![[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4], [0.25, 0.5, 0.25]]).unwrap();
        let labels = [0, 1, 1, 2];
        let t = tace(&p, &labels, 2, 0.0).unwrap();
        let s = sce_with(&p, &labels, 2, Binning::EqualCount).unwrap();
        assert!((t - s).abs() < 1e-15);
    }

    #[test]
    fn tace_confident_correct_is_zero() {
        let p = PredictionBatch::from_probs(array![[0.995, 0.005], [0.004, 0.996], [0.999, 0.001]]).unwrap();
        let t = tace(&p, &[0, 1, 0], 15, 0.99).unwrap();
        assert!(t < 0.01);
        assert!(count_above(&p, 0.99) <= count_above(&p, 0.5));
        assert!(matches!(tace(&p, &[0, 1, 0], 15, 0.9999), Err(Error::Metric(_))));
    }

    #[test]
    fn reliability_sign_and_empty_bins() {
        let p = two_class(&[0.7; 10]);
        let labels: Vec<usize> = (0..10).map(|i| if i < 9 { 0 } else { 1 }).collect();
        let b = bin_predictions(&p, &labels, 10).unwrap();
        let r = reliability_data(&b);
        assert_eq!(r.len(), 10);
        let hit = r.iter().find(|pt| pt.count == 10).unwrap();
        assert!((hit.gap - 0.2).abs() < 1e-12);
        assert!(r.iter().filter(|pt| pt.count == 0).all(|pt| pt.gap == 0.0));
    }

    #[test]
    fn empty_set_is_error() {
        let p = PredictionBatch::from_probs(Array2::zeros((0, 2))).unwrap();
        assert!(matches!(bin_predictions(&p, &[], 15), Err(Error::Metric(_))));
    }

    #[test]
    fn nll_value() {
        let p = two_class(&[0.8, 0.5]);
        let v = nll(&p, &[0, 1]).unwrap();
        assert!((v - 0.5 * (-(0.8f64).ln() - 0.5f64.ln())).abs() < 1e-10);
    }
}
