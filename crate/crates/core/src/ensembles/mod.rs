//! Deep ensembles, MC-Dropout and BatchEnsemble over [`crate::netcore`].
//!
//! All three aggregate by averaging member probabilities.

mod train;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{DenseNet, ForwardMode, PredictionBatch, RankOne};
use crate::rng::RngStream;

pub use train::{
    train_ensemble, train_single, EpochSummary, ForgettingEpochRow, ForgettingRow, PolicyRow, TrainLog, Trained,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Deep,
    McDropout,
    BatchEnsemble,
}

impl EnsembleMode {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMode::Deep => "deep",
            EnsembleMode::McDropout => "mc_dropout",
            EnsembleMode::BatchEnsemble => "batch_ensemble",
        }
    }
}

/// Architecture and ensembling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub mode: EnsembleMode,
    /// Members, dropout samples, or rank-1 factor sets.
    pub k: usize,
    pub hidden: Vec<usize>,
    /// Used by MC-Dropout only; the other modes train without dropout.
    pub dropout_rate: f64,
    /// Std of the Gaussian around 1 that initializes BatchEnsemble factors.
    pub factor_std: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            mode: EnsembleMode::Deep,
            k: 4,
            hidden: vec![64, 64],
            dropout_rate: 0.1,
            factor_std: 0.5,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        if !(self.factor_std >= 0.0 && self.factor_std.is_finite()) {
            return Err(Error::Config(format!("factor std {} must be non-negative", self.factor_std)));
        }
        Ok(())
    }

    pub fn dims(&self, input_dim: usize, n_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend(&self.hidden);
        dims.push(n_classes);
        dims
    }
}

/// Per-member rank-1 factors, `members[k][layer]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneFactors {
    pub members: Vec<Vec<RankOne>>,
}

impl RankOneFactors {
    /// Every entry drawn from `N(1, std²)`, member by member, layer by layer.
    pub fn random(net: &DenseNet, k: usize, std: f64, rng: &mut RngStream) -> Result<Self> {
        let normal = Normal::new(1.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let members = (0..k)
            .map(|_| {
                net.layers
                    .iter()
                    .map(|l| RankOne {
                        r: (0..l.output_dim()).map(|_| normal.sample(rng)).collect(),
                        s: (0..l.input_dim()).map(|_| normal.sample(rng)).collect(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { members })
    }

    pub fn ones(net: &DenseNet, k: usize) -> Self {
        Self {
            members: (0..k)
                .map(|_| net.layers.iter().map(|l| RankOne::ones(l.output_dim(), l.input_dim())).collect())
                .collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    /// Parameters added on top of the shared network: `K·(m+d)` per layer.
    pub fn n_params(&self) -> usize {
        self.members
            .iter()
            .flat_map(|m| m.iter().map(|f| f.r.len() + f.s.len()))
            .sum()
    }
}

/// Forward pass of BatchEnsemble member `k`.
pub fn batchensemble_forward(
    shared: &DenseNet,
    factors: &RankOneFactors,
    k: usize,
    x: ArrayView2<f64>,
) -> Result<PredictionBatch> {
    let member = factors
        .members
        .get(k)
        .ok_or(Error::OutOfRange { index: k, len: factors.k() })?;
    let mut unused = crate::rng::stream(0, &[]);
    shared.forward_scaled(x, Some(member), ForwardMode::Eval, &mut unused)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnsembleModel {
    Deep {
        members: Vec<DenseNet>,
        seeds: Vec<u64>,
    },
    McDropout {
        net: DenseNet,
        samples: usize,
        seed: u64,
    },
    BatchEnsemble {
        shared: DenseNet,
        factors: RankOneFactors,
        seed: u64,
    },
}

impl EnsembleModel {
    pub fn mode(&self) -> EnsembleMode {
        match self {
            EnsembleModel::Deep { .. } => EnsembleMode::Deep,
            EnsembleModel::McDropout { .. } => EnsembleMode::McDropout,
            EnsembleModel::BatchEnsemble { .. } => EnsembleMode::BatchEnsemble,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            EnsembleModel::Deep { members, .. } => members.len(),
            EnsembleModel::McDropout { samples, .. } => *samples,
            EnsembleModel::BatchEnsemble { factors, .. } => factors.k(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            EnsembleModel::Deep { members, .. } => members.iter().map(DenseNet::n_params).sum(),
            EnsembleModel::McDropout { net, .. } => net.n_params(),
            EnsembleModel::BatchEnsemble { shared, factors, .. } => shared.n_params() + factors.n_params(),
        }
    }

    /// Per-member probabilities. MC-Dropout draws one dropout mask set per sample from `rng`.
    pub fn member_predictions(&self, x: ArrayView2<f64>, rng: &mut RngStream) -> Result<Vec<PredictionBatch>> {
        match self {
            EnsembleModel::Deep { members, .. } => members.iter().map(|m| m.forward(x, ForwardMode::Eval, rng)).collect(),
            EnsembleModel::McDropout { net, samples, .. } => {
                (0..*samples).map(|_| net.forward(x, ForwardMode::McDropout, rng)).collect()
            }
            EnsembleModel::BatchEnsemble { shared, factors, .. } => {
                (0..factors.k()).map(|k| batchensemble_forward(shared, factors, k, x)).collect()
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, model: self.clone() };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        Ok(ck.model)
    }
}

const CHECKPOINT_FORMAT: &str = "callab-ensemble";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: EnsembleModel,
}

/// Arithmetic mean of member probabilities.
pub fn aggregate(members: &[PredictionBatch]) -> Result<PredictionBatch> {
    let first = members.first().ok_or_else(|| Error::Input("no member predictions".into()))?;
    let mut sum = Array2::<f64>::zeros(first.probs().raw_dim());
    for m in members {
        if m.probs().dim() != sum.dim() {
            return Err(Error::Shape("member predictions differ in shape".into()));
        }
        sum += m.probs();
    }
    sum /= members.len() as f64;
    Ok(PredictionBatch::from_probs_unchecked(sum))
}

pub fn predict_ensemble(model: &EnsembleModel, x: ArrayView2<f64>, rng: &mut RngStream) -> Result<PredictionBatch> {
    aggregate(&model.member_predictions(x, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::Dense;
    use crate::rng::stream;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn hand_rank_one_product() {
        let net = DenseNet::from_layers(vec![Dense { weight: Array2::ones((2, 2)), bias: array![0.0, 0.0] }], 0.0).unwrap();
        let f = RankOneFactors { members: vec![vec![RankOne { r: array![2.0, 1.0], s: array![1.0, 3.0] }]] };
        let p = batchensemble_forward(&net, &f, 0, array![[1.0, 1.0]].view()).unwrap();
        // Logits (8, 4).
        let e = (4.0f64).exp();
        assert!((p.probs()[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!(matches!(batchensemble_forward(&net, &f, 1, array![[1.0, 1.0]].view()), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn ones_factors_match_plain_forward() {
        let mut rng = stream(3, &[]);
        let net = DenseNet::new(&[3, 6, 4], 0.0, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((5, 3), || rng.random::<f64>());
        let f = RankOneFactors::ones(&net, 2);
        let a = batchensemble_forward(&net, &f, 1, x.view()).unwrap();
        let b = net.forward(x.view(), ForwardMode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn factorized_matches_explicit_product() {
        for seed in 0..20 {
            let mut rng = stream(seed, &[]);
            let net = DenseNet::new(&[4, 7, 5, 3], 0.0, &mut rng).unwrap();
            let f = RankOneFactors::random(&net, 3, 0.5, &mut rng).unwrap();
            let x = Array2::from_shape_simple_fn((6, 4), || rng.random::<f64>() - 0.5);
            for k in 0..3 {
                let explicit = DenseNet::from_layers(
                    net.layers
                        .iter()
                        .zip(&f.members[k])
                        .map(|(l, fk)| Dense { weight: &l.weight * &fk.matrix(), bias: l.bias.clone() })
                        .collect(),
                    0.0,
                )
                .unwrap();
                let a = batchensemble_forward(&net, &f, k, x.view()).unwrap();
                let b = explicit.forward(x.view(), ForwardMode::Eval, &mut rng).unwrap();
                for (u, v) in a.probs().iter().zip(b.probs()) {
                    assert!((u - v).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn factor_matrices_are_rank_one() {
        let mut rng = stream(1, &[]);
        let net = DenseNet::new(&[3, 4, 2], 0.0, &mut rng).unwrap();
        let f = RankOneFactors::random(&net, 2, 0.5, &mut rng).unwrap();
        for fk in f.members.iter().flatten() {
            let m = fk.matrix();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    for i2 in i + 1..m.nrows() {
                        for j2 in j + 1..m.ncols() {
                            let minor = m[[i, j]] * m[[i2, j2]] - m[[i, j2]] * m[[i2, j]];
                            assert!(minor.abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extra_params_per_layer() {
        let mut rng = stream(0, &[]);
        let net = DenseNet::new(&[2, 64, 64, 5], 0.0, &mut rng).unwrap();
        let f = RankOneFactors::random(&net, 4, 0.5, &mut rng).unwrap();
        assert_eq!(f.n_params(), 4 * ((64 + 2) + (64 + 64) + (5 + 64)));
    }

    #[test]
    fn aggregate_mean_and_bounds() {
        let a = PredictionBatch::from_probs(array![[1.0, 0.0]]).unwrap();
        let b = PredictionBatch::from_probs(array![[0.0, 1.0]]).unwrap();
        assert_eq!(aggregate(&[a.clone(), b.clone()]).unwrap().probs(), &array![[0.5, 0.5]]);
        assert_eq!(aggregate(&[a.clone(), a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert_eq!(aggregate(&[a.clone(), b.clone()]).unwrap(), aggregate(&[b, a]).unwrap());
    }

    #[test]
    fn members_differ() {
        let mut same = 0;
        for seed in 0..100 {
            let mut rng = stream(seed, &[]);
            let net = DenseNet::new(&[2, 8, 3], 0.0, &mut rng).unwrap();
            let f = RankOneFactors::random(&net, 2, 0.5, &mut rng).unwrap();
            let x = Array2::from_shape_simple_fn((1, 2), || rng.random::<f64>());
            let a = batchensemble_forward(&net, &f, 0, x.view()).unwrap();
            let b = batchensemble_forward(&net, &f, 1, x.view()).unwrap();
            if a == b {
                same += 1;
            }
        }
        assert_eq!(same, 0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = stream(2, &[]);
        let shared = DenseNet::new(&[2, 5, 3], 0.0, &mut rng).unwrap();
        let factors = RankOneFactors::random(&shared, 2, 0.5, &mut rng).unwrap();
        let model = EnsembleModel::BatchEnsemble { shared, factors, seed: 9 };
        let dir = std::env::temp_dir().join(format!("callab-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        model.save(&path).unwrap();
        assert_eq!(EnsembleModel::load(&path).unwrap(), model);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
