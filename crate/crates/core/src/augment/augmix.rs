use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mixup::{beta, check_pairable, draw_lambdas, draw_partners, interpolate, MixedBatch};
use crate::error::{Error, Result};
use crate::netcore::SoftLabels;
use crate::rng::RngStream;

/// Label-preserving transforms of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOpKind {
    Identity,
    /// Rotation in a random 2-D subspace, angle up to 0.3·intensity rad.
    Rotate,
    /// Additive Gaussian noise with std 0.1·intensity.
    Noise,
    /// Per-coordinate scaling by `exp(u)`, `|u| ≤ 0.2·intensity`.
    Scale,
    /// Per-coordinate shift up to 0.3·intensity.
    Translate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentOp {
    pub kind: AugmentOpKind,
    pub intensity: f64,
}

impl AugmentOp {
    pub fn new(kind: AugmentOpKind, intensity: f64) -> Self {
        Self { kind, intensity }
    }

    pub fn apply(&self, x: ArrayView1<f64>, rng: &mut RngStream) -> Array1<f64> {
        if self.intensity == 0.0 || self.kind == AugmentOpKind::Identity {
            return x.to_owned();
        }
        let d = x.len();
        let t = self.intensity;
        match self.kind {
            AugmentOpKind::Identity => x.to_owned(),
            AugmentOpKind::Rotate => {
                if d < 2 {
                    return x.to_owned();
                }
                let (u, v) = random_plane(d, rng);
                let theta = rng.random_range(-1.0..=1.0) * 0.3 * t;
                let a = x.dot(&u);
                let b = x.dot(&v);
                let (s, c) = theta.sin_cos();
                // Rotate the (u, v) component, leave the orthogonal complement alone.
                &x + &(&u * ((c - 1.0) * a - s * b)) + &(&v * (s * a + (c - 1.0) * b))
            }
            AugmentOpKind::Noise => x.mapv(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + 0.1 * t * z
            }),
            AugmentOpKind::Scale => x.mapv(|v| v * (rng.random_range(-1.0..=1.0) * 0.2 * t).exp()),
            AugmentOpKind::Translate => x.mapv(|v| v + rng.random_range(-1.0..=1.0) * 0.3 * t),
        }
    }
}

fn random_plane(d: usize, rng: &mut RngStream) -> (Array1<f64>, Array1<f64>) {
    loop {
        let u: Array1<f64> = Array1::from_shape_simple_fn(d, || StandardNormal.sample(rng));
        let v: Array1<f64> = Array1::from_shape_simple_fn(d, || StandardNormal.sample(rng));
        let nu = u.dot(&u).sqrt();
        if nu < 1e-9 {
            continue;
        }
        let u = u / nu;
        let v = &v - &(&u * u.dot(&v));
        let nv = v.dot(&v).sqrt();
        if nv < 1e-9 {
            continue;
        }
        return (u, v / nv);
    }
}

/// The operation set AugMix samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOpSet {
    pub ops: Vec<AugmentOp>,
}

impl AugmentOpSet {
    /// Rotation, noise, scaling and translation at a shared intensity.
    pub fn standard(intensity: f64) -> Self {
        use AugmentOpKind::*;
        Self {
            ops: [Rotate, Noise, Scale, Translate]
                .into_iter()
                .map(|k| AugmentOp::new(k, intensity))
                .collect(),
        }
    }

    pub fn identity() -> Self {
        Self {
            ops: vec![AugmentOp::new(AugmentOpKind::Identity, 1.0)],
        }
    }
}

impl Default for AugmentOpSet {
    fn default() -> Self {
        Self::standard(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugMixParams {
    /// Number of augmentation branches.
    pub k: usize,
    pub dirichlet_a: f64,
    pub beta_a: f64,
}

impl Default for AugMixParams {
    fn default() -> Self {
        Self {
            k: 3,
            dirichlet_a: 1.0,
            beta_a: 1.0,
        }
    }
}

impl AugMixParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("AugMix needs k ≥ 1".into()));
        }
        if !(self.dirichlet_a > 0.0) || !(self.beta_a > 0.0) {
            return Err(Error::Config("AugMix concentrations must be positive".into()));
        }
        Ok(())
    }
}

/// A point on the `k`-simplex drawn from `Dirichlet(a, …, a)` via normalized Gammas.
pub fn sample_dirichlet(k: usize, a: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    let g = Gamma::new(a, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    loop {
        let draws: Vec<f64> = (0..k).map(|_| g.sample(rng)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 && s.is_finite() {
            return Ok(draws.into_iter().map(|v| v / s).collect());
        }
    }
}

/// AugMix on every row: `m·x + (1−m)·Σ w_i op_i(x)` with `w ~ Dirichlet`,
/// `m ~ Beta` (or `m_override`). Computed as `x + (1−m)·Σ w_i (op_i(x) − x)`,
/// which equals the convex form because the weights sum to one and leaves `x`
/// untouched when every sampled op is the identity.
pub fn augmix(
    x: ArrayView2<f64>,
    opset: &AugmentOpSet,
    params: &AugMixParams,
    rng: &mut RngStream,
    m_override: Option<f64>,
) -> Result<Array2<f64>> {
    if opset.ops.is_empty() {
        return Err(Error::Config("AugMix operation set is empty".into()));
    }
    params.validate()?;
    let m_dist = beta(params.beta_a)?;
    let mut out = x.to_owned();
    for (i, row) in x.outer_iter().enumerate() {
        let w = sample_dirichlet(params.k, params.dirichlet_a, rng)?;
        let m = match m_override {
            Some(m) => m,
            None => m_dist.sample(rng),
        };
        let mut delta = Array1::<f64>::zeros(row.len());
        for wi in w {
            let op = opset.ops[rng.random_range(0..opset.ops.len())];
            let y = op.apply(row, rng);
            Zip::from(&mut delta).and(&y).and(row).for_each(|d, &a, &b| *d += wi * (a - b));
        }
        if m == 1.0 || delta.iter().all(|&d| d == 0.0) {
            continue;
        }
        Zip::from(out.row_mut(i)).and(&delta).for_each(|o, &d| *o += (1.0 - m) * d);
    }
    Ok(out)
}

/// AugMix applied independently to both partners, then Mixup with a shared λ.
/// Partners and λ are drawn first, in the same order as [`super::mixup_batch`].
pub fn augmixup(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    opset: &AugmentOpSet,
    params: &AugMixParams,
    a: f64,
    rng: &mut RngStream,
    lambda_override: Option<&[f64]>,
) -> Result<MixedBatch> {
    check_pairable(&x, y)?;
    let n = x.nrows();
    let partners = draw_partners(n, rng);
    let lambdas = match lambda_override {
        Some(l) if l.len() == n => l.to_vec(),
        Some(l) => return Err(Error::Shape(format!("{} lambdas for batch of {n}", l.len()))),
        None => draw_lambdas(n, a, rng)?,
    };
    augmixup_with(x, y, opset, params, partners, lambdas, rng)
}

pub(crate) fn augmixup_with(
    x: ArrayView2<f64>,
    y: &SoftLabels,
    opset: &AugmentOpSet,
    params: &AugMixParams,
    partners: Vec<usize>,
    lambdas: Vec<f64>,
    rng: &mut RngStream,
) -> Result<MixedBatch> {
    let augmented = augmix(x, opset, params, rng, None)?;
    Ok(interpolate(augmented.view(), y, partners, lambdas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::mixup_batch;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn m_one_is_identity() {
        let x = array![[1.0, 2.0], [-3.0, 0.25]];
        let out = augmix(x.view(), &AugmentOpSet::default(), &AugMixParams::default(), &mut stream(2, &[]), Some(1.0)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn identity_ops_are_identity() {
        let x = array![[1.0, 2.0, 3.0], [-3.0, 0.25, 9.0]];
        for seed in 0..20 {
            let out = augmix(x.view(), &AugmentOpSet::identity(), &AugMixParams::default(), &mut stream(seed, &[]), None).unwrap();
            assert_eq!(out, x);
        }
        let zero = AugmentOpSet::standard(0.0);
        let out = augmix(x.view(), &zero, &AugMixParams::default(), &mut stream(1, &[]), None).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn dirichlet_on_simplex() {
        let mut rng = stream(8, &[]);
        for k in 1..8 {
            for a in [0.1, 1.0, 5.0] {
                let w = sample_dirichlet(k, a, &mut rng).unwrap();
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(w.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn empty_opset_rejected() {
        let x = array![[1.0, 2.0]];
        let empty = AugmentOpSet { ops: vec![] };
        assert!(augmix(x.view(), &empty, &AugMixParams::default(), &mut stream(0, &[]), None).is_err());
    }

    #[test]
    fn ops_keep_values_finite_and_rotation_preserves_norm() {
        let x = array![3.0, -4.0, 1.0];
        let mut rng = stream(4, &[]);
        for kind in [AugmentOpKind::Rotate, AugmentOpKind::Noise, AugmentOpKind::Scale, AugmentOpKind::Translate] {
            let y = AugmentOp::new(kind, 2.0).apply(x.view(), &mut rng);
            assert!(y.iter().all(|v| v.is_finite()));
        }
        let y = AugmentOp::new(AugmentOpKind::Rotate, 1.0).apply(x.view(), &mut rng);
        assert!((y.dot(&y) - x.dot(&x)).abs() < 1e-10);
    }

    #[test]
    fn identity_augmixup_matches_mixup() {
        let x = array![[0.0, 1.0], [2.0, -1.0], [5.0, 5.0], [1.0, 1.5]];
        let y = SoftLabels::from_hard(&[0, 1, 2, 1], 3).unwrap();
        let a = augmixup(x.view(), &y, &AugmentOpSet::identity(), &AugMixParams::default(), 1.0, &mut stream(3, &[]), None).unwrap();
        let b = mixup_batch(x.view(), &y, 1.0, &mut stream(3, &[]), None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn augmixup_lambda_one_identity_opset() {
        let x = array![[0.0, 1.0], [2.0, -1.0]];
        let y = SoftLabels::from_hard(&[0, 1], 2).unwrap();
        let out = augmixup(x.view(), &y, &AugmentOpSet::identity(), &AugMixParams::default(), 1.0, &mut stream(3, &[]), Some(&[1.0, 1.0])).unwrap();
        assert_eq!(out.x, x);
        assert_eq!(out.targets, y);
    }
}
