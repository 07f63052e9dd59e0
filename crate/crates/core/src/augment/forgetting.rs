use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::mixup::{beta, check_pairable, draw_partners, interpolate, MixedBatch};
use crate::error::{Error, Result};
use crate::netcore::SoftLabels;
use crate::rng::RngStream;
use rand_distr::Distribution;

/// Per-example forgetting counts and the Mixup coefficient derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingTracker {
    pub prev_acc: Vec<bool>,
    pub forget_count: Vec<u32>,
    pub mixup_coeff: Vec<f64>,
}

impl ForgettingTracker {
    pub fn new(n_examples: usize) -> Self {
        Self {
            prev_acc: vec![false; n_examples],
            forget_count: vec![0; n_examples],
            mixup_coeff: vec![0.0; n_examples],
        }
    }

    pub fn len(&self) -> usize {
        self.prev_acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prev_acc.is_empty()
    }

    /// Counts a forgetting event on every correct → incorrect transition.
    /// `prev_acc` always takes the current correctness.
    pub fn update(&mut self, batch_indices: &[usize], correct: &[bool]) -> Result<()> {
        if batch_indices.len() != correct.len() {
            return Err(Error::Shape("indices and correctness differ in length".into()));
        }
        let n = self.len();
        if let Some(&bad) = batch_indices.iter().find(|&&i| i >= n) {
            return Err(Error::OutOfRange { index: bad, len: n });
        }
        for (&i, &acc) in batch_indices.iter().zip(correct) {
            if self.prev_acc[i] && !acc {
                self.forget_count[i] += 1;
            }
            self.prev_acc[i] = acc;
        }
        Ok(())
    }

    /// `threshold = sorted(T)[N / 2]`; examples with `T[i] > threshold` get
    /// coefficient `a`, the rest 0.
    pub fn refresh_policy(&mut self, a: f64) -> u32 {
        let mut sorted = self.forget_count.clone();
        sorted.sort_unstable();
        let threshold = sorted.get(sorted.len() / 2).copied().unwrap_or(0);
        for (c, &t) in self.mixup_coeff.iter_mut().zip(&self.forget_count) {
            *c = if t > threshold { a } else { 0.0 };
        }
        threshold
    }

    pub fn n_enabled(&self) -> usize {
        self.mixup_coeff.iter().filter(|&&c| c > 0.0).count()
    }
}

/// [`ForgettingTracker::update`] as a free function.
pub fn forgetting_update(tracker: &mut ForgettingTracker, batch_indices: &[usize], correct: &[bool]) -> Result<()> {
    tracker.update(batch_indices, correct)
}

/// [`ForgettingTracker::refresh_policy`] as a free function.
pub fn forgetting_policy(tracker: &mut ForgettingTracker, a: f64) {
    tracker.refresh_policy(a);
}

/// Mixup where example `i` draws `λ ~ Beta(c_i, c_i)` from its coefficient, and
/// passes through when `c_i = 0`.
pub fn forgetting_apply(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    batch_indices: &[usize],
    tracker: &ForgettingTracker,
    rng: &mut RngStream,
) -> Result<MixedBatch> {
    check_pairable(&x, y)?;
    let partners = draw_partners(x.nrows(), rng);
    let mut lambdas = Vec::with_capacity(batch_indices.len());
    for &i in batch_indices {
        let c = *tracker
            .mixup_coeff
            .get(i)
            .ok_or(Error::OutOfRange { index: i, len: tracker.len() })?;
        lambdas.push(if c > 0.0 { beta(c)?.sample(rng) } else { 1.0 });
    }
    Ok(interpolate(x, y, partners, lambdas))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(seq: &[bool]) -> u32 {
        let mut t = ForgettingTracker::new(1);
        for &c in seq {
            t.update(&[0], &[c]).unwrap();
        }
        t.forget_count[0]
    }

    #[test]
    fn forgetting_traces() {
        assert_eq!(trace(&[false, true, false]), 1);
        assert_eq!(trace(&[true, true, true]), 0);
        assert_eq!(trace(&[true, false, true, false]), 2);
        assert_eq!(trace(&[false, false]), 0);
    }

    #[test]
    fn out_of_range_index() {
        let mut t = ForgettingTracker::new(3);
        assert!(matches!(t.update(&[3], &[true]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn median_threshold() {
        let mut t = ForgettingTracker::new(4);
        t.forget_count = vec![2, 2, 2, 2];
        t.refresh_policy(1.0);
        assert_eq!(t.n_enabled(), 0);

        t.forget_count = vec![0, 0, 5, 5];
        t.refresh_policy(1.0);
        assert_eq!(t.mixup_coeff, vec![0.0; 4]);

        t.forget_count = vec![0, 1, 5, 6];
        t.refresh_policy(0.4);
        assert_eq!(t.mixup_coeff, vec![0.0, 0.0, 0.0, 0.4]);
    }

    #[test]
    fn zero_coefficients_pass_through() {
        use crate::rng::stream;
        use ndarray::array;
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let y = SoftLabels::from_hard(&[0, 1], 2).unwrap();
        let t = ForgettingTracker::new(2);
        let out = forgetting_apply(x.view(), &y, &[0, 1], &t, &mut stream(0, &[])).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.targets, y);
    }
}
