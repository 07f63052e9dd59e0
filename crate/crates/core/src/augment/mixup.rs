use ndarray::{Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::netcore::SoftLabels;
use crate::rng::RngStream;

/// Augmented inputs and targets, with the interpolation that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub x: Array2<f64>,
    pub targets: SoftLabels,
    /// Weight on the anchor example; 1 means the example passed through.
    pub lambdas: Vec<f64>,
    /// In-batch partner of each example.
    pub partners: Vec<usize>,
}

impl MixedBatch {
    pub(crate) fn passthrough(x: Array2<f64>, targets: SoftLabels) -> Self {
        let n = x.nrows();
        Self {
            x,
            targets,
            lambdas: vec![1.0; n],
            partners: (0..n).collect(),
        }
    }
}

pub(crate) fn check_pairable(x: &ArrayView2<f64>, y: &SoftLabels) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::Config(format!("mixup needs at least 2 examples per batch, got {}", x.nrows())));
    }
    if y.len() != x.nrows() {
        return Err(Error::Shape(format!("{} targets for {} inputs", y.len(), x.nrows())));
    }
    Ok(())
}

pub(crate) fn draw_partners(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

pub(crate) fn beta(a: f64) -> Result<Beta<f64>> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Config(format!("Beta concentration must be positive, got {a}")));
    }
    Beta::new(a, a).map_err(|e| Error::Config(e.to_string()))
}

pub(crate) fn draw_lambdas(n: usize, a: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let dist = beta(a)?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// `x̃_i = λ_i x_i + (1−λ_i) x_{p(i)}` and likewise for targets; `λ_i = 1` copies
/// the anchor bit for bit.
pub(crate) fn interpolate(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    partners: Vec<usize>,
    lambdas: Vec<f64>,
) -> MixedBatch {
    let t = y.as_array();
    let mut xo = x.to_owned();
    let mut to = t.to_owned();
    for (i, (&j, &lam)) in partners.iter().zip(&lambdas).enumerate() {
        if lam == 1.0 {
            continue;
        }
        Zip::from(xo.row_mut(i))
            .and(x.row(i))
            .and(x.row(j))
            // Clamped: rounding can otherwise step one ulp outside the segment.
            .for_each(|o, &a, &b| *o = (lam * a + (1.0 - lam) * b).clamp(a.min(b), a.max(b)));
        Zip::from(to.row_mut(i))
            .and(t.row(i))
            .and(t.row(j))
            .for_each(|o, &a, &b| *o = lam * a + (1.0 - lam) * b);
    }
    MixedBatch {
        x: xo,
        targets: SoftLabels::new_unchecked(to),
        lambdas,
        partners,
    }
}

/// Mixup within a minibatch. Partners come from a random permutation of the
/// batch; `λ ~ Beta(a, a)` per example unless `lambda_override` is given.
pub fn mixup_batch(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    a: f64,
    rng: &mut RngStream,
    lambda_override: Option<&[f64]>,
) -> Result<MixedBatch> {
    check_pairable(&x, y)?;
    let n = x.nrows();
    let partners = draw_partners(n, rng);
    let lambdas = match lambda_override {
        Some(l) => {
            if l.len() != n {
                return Err(Error::Shape(format!("{} lambdas for batch of {n}", l.len())));
            }
            if l.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Input("lambda outside [0, 1]".into()));
            }
            l.to_vec()
        }
        None => draw_lambdas(n, a, rng)?,
    };
    Ok(interpolate(x, y, partners, lambdas))
}

/// True class gets `1 − alpha`; the remaining mass is spread evenly.
pub fn label_smooth(labels: &[usize], n_classes: usize, alpha: f64) -> Result<SoftLabels> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("smoothing coefficient {alpha} not in [0, 1)")));
    }
    if alpha > 0.0 && n_classes < 2 {
        return Err(Error::Config("label smoothing needs at least two classes".into()));
    }
    let off = if n_classes > 1 { alpha / (n_classes - 1) as f64 } else { 0.0 };
    let mut rows = Array2::from_elem((labels.len(), n_classes), off);
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::OutOfRange { index: y, len: n_classes });
        }
        rows[[i, y]] = 1.0 - alpha;
    }
    Ok(SoftLabels::new_unchecked(rows))
}
