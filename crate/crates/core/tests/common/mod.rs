//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use callab::netcore::{DenseNet, ForwardMode, PredictionBatch, RankOne, SoftLabels};
use callab::rng::stream;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const M: usize = 15;
const H: f64 = 1e-5;

/// Random prediction set with N ≤ 200 and C ≤ 10, including bin-edge and one-hot rows.
pub fn random_set(seed: u64) -> (PredictionBatch, Vec<usize>) {
    let mut rng = stream(seed, &[3]);
    let n = rng.random_range(1..=200);
    let c = rng.random_range(2..=10);
    let mut p = Array2::<f64>::zeros((n, c));
    for mut row in p.outer_iter_mut() {
        match rng.random_range(0..4) {
            // Confidence exactly on a bin edge.
            0 => {
                let k = rng.random_range(1..=M);
                let top = (k as f64 / M as f64).max(1.0 / c as f64);
                let j = rng.random_range(0..c);
                row.fill((1.0 - top) / (c - 1) as f64);
                row[j] = top;
            }
            // One-hot.
            1 => row[rng.random_range(0..c)] = 1.0,
            _ => {
                let sharp = rng.random_range(0.5..6.0);
                row.mapv_inplace(|_| rng.random::<f64>().powf(sharp));
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    (PredictionBatch::from_probs(p).unwrap(), labels)
}

/// Walks bins in order and, for each, every example in order.
pub fn oracle_ece(p: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    let mut total = 0.0;
    for m in 1..=M {
        let lo = (m - 1) as f64 / M as f64;
        let hi = m as f64 / M as f64;
        let (mut count, mut correct, mut conf_sum) = (0usize, 0usize, 0.0);
        for (row, &y) in p.outer_iter().zip(labels) {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            let conf = row[best];
            let inside = (conf > lo && conf <= hi) || (m == 1 && conf == 0.0);
            if inside {
                count += 1;
                conf_sum += conf;
                if best == y {
                    correct += 1;
                }
            }
        }
        if count > 0 {
            let acc = correct as f64 / count as f64;
            let cf = conf_sum / count as f64;
            total += count as f64 / n * (acc - cf).abs();
        }
    }
    total
}

/// Regularized loss evaluated directly from probabilities, independent of `backprop`.
fn objective(net: &DenseNet, scales: Option<&[RankOne]>, x: &Array2<f64>, y: &SoftLabels, l2: f64) -> f64 {
    let p = net
        .forward_scaled(x.view(), scales, ForwardMode::Eval, &mut stream(0, &[]))
        .unwrap();
    let t = y.as_array();
    let mut ce = 0.0;
    for (pr, tr) in p.probs().outer_iter().zip(t.outer_iter()) {
        for (pc, tc) in pr.iter().zip(tr.iter()) {
            ce -= tc * (pc + 1e-12).ln();
        }
    }
    ce /= x.nrows() as f64;
    let wsq: f64 = net.layers.iter().map(|l| l.weight.iter().map(|w| w * w).sum::<f64>()).sum();
    ce + 0.5 * l2 * wsq
}

fn rel_err(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    // Absolute floor keeps near-zero entries from dominating through round-off.
    diff / (a.abs().max(n.abs())).max(1e-6)
}

pub fn random_problem(seed: u64) -> (DenseNet, Array2<f64>, SoftLabels, f64) {
    let mut rng = stream(seed, &[42]);
    let d_in = rng.random_range(2..5);
    let h1 = rng.random_range(3..8);
    let h2 = rng.random_range(3..8);
    let c = rng.random_range(2..6);
    let mut net = DenseNet::new(&[d_in, h1, h2, c], 0.0, &mut rng).unwrap();
    let n = Normal::new(0.0, 0.5).unwrap();
    for l in &mut net.layers {
        l.bias.mapv_inplace(|_| n.sample(&mut rng));
    }
    let b = rng.random_range(2..7);
    let x = Array2::from_shape_simple_fn((b, d_in), || n.sample(&mut rng) * 2.0);
    let mut t = Array2::from_shape_simple_fn((b, c), || rng.random::<f64>());
    for mut row in t.outer_iter_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    let l2 = if seed.is_multiple_of(2) { 0.0 } else { 1e-2 };
    (net, x, SoftLabels::new(t).unwrap(), l2)
}

/// Worst relative error of analytic weight and bias gradients over the given problems.
pub fn dense_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let (net, x, y, l2) = random_problem(seed);
        let g = net.backward(x.view(), &y, l2).unwrap();
        for li in 0..net.layers.len() {
            let (m, d) = net.layers[li].weight.dim();
            for i in 0..m {
                for j in 0..d {
                    let mut plus = net.clone();
                    plus.layers[li].weight[[i, j]] += H;
                    let mut minus = net.clone();
                    minus.layers[li].weight[[i, j]] -= H;
                    let num = (objective(&plus, None, &x, &y, l2) - objective(&minus, None, &x, &y, l2)) / (2.0 * H);
                    worst = worst.max(rel_err(g.layers[li].weight[[i, j]], num));
                }
                let mut plus = net.clone();
                plus.layers[li].bias[i] += H;
                let mut minus = net.clone();
                minus.layers[li].bias[i] -= H;
                let num = (objective(&plus, None, &x, &y, l2) - objective(&minus, None, &x, &y, l2)) / (2.0 * H);
                worst = worst.max(rel_err(g.layers[li].bias[i], num));
            }
        }
    }
    worst
}

/// Same, for rank-1 factor gradients and the shared weights they scale.
pub fn rank_one_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in seeds {
        let (net, x, y, l2) = random_problem(seed);
        let mut rng = stream(seed, &[7]);
        let n = Normal::new(1.0, 0.5).unwrap();
        let scales: Vec<RankOne> = net
            .layers
            .iter()
            .map(|l| RankOne {
                r: Array1::from_shape_simple_fn(l.output_dim(), || n.sample(&mut rng)),
                s: Array1::from_shape_simple_fn(l.input_dim(), || n.sample(&mut rng)),
            })
            .collect();
        let trace = net.trace(x.view(), Some(&scales), ForwardMode::Eval, &mut rng).unwrap();
        let (g, fg) = net.backprop(&trace, Some(&scales), &y, l2).unwrap();
        let fg = fg.unwrap();
        for li in 0..net.layers.len() {
            for i in 0..scales[li].r.len() {
                let mut plus = scales.clone();
                plus[li].r[i] += H;
                let mut minus = scales.clone();
                minus[li].r[i] -= H;
                let num = (objective(&net, Some(&plus), &x, &y, l2) - objective(&net, Some(&minus), &x, &y, l2)) / (2.0 * H);
                worst = worst.max(rel_err(fg[li].r[i], num));
            }
            for j in 0..scales[li].s.len() {
                let mut plus = scales.clone();
                plus[li].s[j] += H;
                let mut minus = scales.clone();
                minus[li].s[j] -= H;
                let num = (objective(&net, Some(&plus), &x, &y, l2) - objective(&net, Some(&minus), &x, &y, l2)) / (2.0 * H);
                worst = worst.max(rel_err(fg[li].s[j], num));
            }
            let (m, d) = net.layers[li].weight.dim();
            for i in 0..m {
                for j in 0..d {
                    let mut plus = net.clone();
                    plus.layers[li].weight[[i, j]] += H;
                    let mut minus = net.clone();
                    minus.layers[li].weight[[i, j]] -= H;
                    let num = (objective(&plus, Some(&scales), &x, &y, l2)
                        - objective(&minus, Some(&scales), &x, &y, l2))
                        / (2.0 * H);
                    worst = worst.max(rel_err(g.layers[li].weight[[i, j]], num));
                }
            }
        }
    }
    worst
}
