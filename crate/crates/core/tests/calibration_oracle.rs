//! Calibration metrics against direct per-example summation.

mod common;

use callab::calibration::{adaptive_bins, bin_predictions, ece};
use callab::netcore::PredictionBatch;
use callab::rng::stream;
use common::{oracle_ece, random_set, M};
use rand::seq::SliceRandom;

#[test]
fn ece_matches_oracle_exactly() {
    for seed in 0..1000 {
        let (p, y) = random_set(seed);
        let bins = bin_predictions(&p, &y, M).unwrap();
        assert_eq!(bins.n(), y.len());
        let got = ece(&bins).unwrap();
        let want = oracle_ece(p.probs(), &y);
        assert_eq!(got.to_bits(), want.to_bits(), "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn ace_occupancy_differs_by_at_most_one() {
    for seed in 0..1000 {
        let (p, y) = random_set(seed);
        let m = M.min(p.len());
        let bins = adaptive_bins(&p, &y, m).unwrap();
        let lo = bins.iter().map(|b| b.count).min().unwrap();
        let hi = bins.iter().map(|b| b.count).max().unwrap();
        assert!(hi - lo <= 1, "seed {seed}");
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), p.len());
    }
}

#[test]
fn ece_permutation_invariant() {
    for seed in 0..200 {
        let (p, y) = random_set(seed);
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(&mut stream(seed, &[4]));
        let p2 = PredictionBatch::from_probs(p.probs().select(ndarray::Axis(0), &order)).unwrap();
        let y2: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let a = ece(&bin_predictions(&p, &y, M).unwrap()).unwrap();
        let b = ece(&bin_predictions(&p2, &y2, M).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn single_bin_is_accuracy_minus_confidence() {
    for seed in 0..200 {
        let (p, y) = random_set(seed);
        let e = ece(&bin_predictions(&p, &y, 1).unwrap()).unwrap();
        let conf = p.confidence();
        let mean_conf = conf.iter().sum::<f64>() / conf.len() as f64;
        assert!((e - (p.accuracy(&y) - mean_conf).abs()).abs() < 1e-12);
    }
}
