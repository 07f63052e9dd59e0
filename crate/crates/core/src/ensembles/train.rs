use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, batchensemble_forward, EnsembleMode, EnsembleModel, EnsembleSpec, RankOneFactors};
use crate::augment::{camixup_refresh, AugmentStrategy, Augmenter};
use crate::data::{minibatches, LabeledDataset, Splits};
use crate::error::{Error, Result};
use crate::netcore::{DenseNet, ForwardMode, Gradients, Momentum, PredictionBatch, Sgd, StepOutput, TrainConfig};
use crate::rng::{derive_seed, stream, tags, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss per example, averaged over learners.
    pub loss: f64,
}

/// Class gate in effect while training `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub epoch: usize,
    pub class: usize,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgettingEpochRow {
    pub epoch: usize,
    pub member: usize,
    pub n_enabled: usize,
}

/// Final forgetting state of one training example for one member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub member: usize,
    pub example: usize,
    pub forget_count: u32,
    pub coeff: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochSummary>,
    pub policy: Vec<PolicyRow>,
    pub forgetting_epochs: Vec<ForgettingEpochRow>,
    pub forgetting: Vec<ForgettingRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: EnsembleModel,
    pub log: TrainLog,
}

/// Seed of deep-ensemble member `k`; member 0 uses the run seed itself.
fn member_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        derive_seed(derive_seed(seed, tags::MEMBER), k as u64)
    }
}

fn check_step(out: &StepOutput, epoch: usize) -> Result<()> {
    if out.loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch, loss: out.loss })
    }
}

/// One independently parameterized network with its optimizer and augmentation state.
struct Learner {
    net: DenseNet,
    sgd: Sgd,
    augmenter: Augmenter,
    seed: u64,
}

impl Learner {
    fn new(dims: &[usize], dropout: f64, seed: u64, strategy: &AugmentStrategy, data: &LabeledDataset) -> Result<Self> {
        Ok(Self {
            net: DenseNet::new(dims, dropout, &mut stream(seed, &[tags::INIT]))?,
            sgd: Sgd::new(),
            augmenter: Augmenter::new(strategy.clone(), data.n_classes, data.len())?,
            seed,
        })
    }

    fn run_epoch(&mut self, train: &LabeledDataset, config: &TrainConfig, epoch: usize) -> Result<f64> {
        let mut total = 0.0;
        for (bi, batch) in minibatches(train, config.batch_size, self.seed, epoch).enumerate() {
            let path = [epoch as u64, bi as u64];
            let mixed = self
                .augmenter
                .augment(&batch, &mut stream(self.seed, &[tags::AUGMENT, path[0], path[1]]))?;
            let mut drng = stream(self.seed, &[tags::DROPOUT, path[0], path[1]]);
            let out = self
                .net
                .step(mixed.x.view(), None, &mixed.targets, config.l2, ForwardMode::Train, &mut drng)?;
            check_step(&out, epoch)?;
            if self.augmenter.tracker.is_some() {
                let clean = self.net.forward(batch.x.view(), ForwardMode::Eval, &mut drng)?;
                self.augmenter.observe_batch(&batch, &clean)?;
            }
            self.sgd.step(&mut self.net, &out.grads, config, epoch)?;
            total += out.loss * batch.indices.len() as f64;
        }
        Ok(total / train.len() as f64)
    }
}

/// Shared network, per-member factors, one optimizer for each.
struct BatchEnsembleState {
    shared: DenseNet,
    factors: RankOneFactors,
    sgd: Sgd,
    factor_opt: Vec<Momentum>,
    augmenters: Vec<Augmenter>,
    seed: u64,
}

impl BatchEnsembleState {
    /// Every member sees the same minibatch with its own augmentation draw;
    /// the objective is the mean of the member losses.
    fn run_epoch(&mut self, train: &LabeledDataset, config: &TrainConfig, epoch: usize) -> Result<f64> {
        let k = self.factors.k();
        let mut total = 0.0;
        for (bi, batch) in minibatches(train, config.batch_size, self.seed, epoch).enumerate() {
            let (shared, factors, augs, seed) = (&self.shared, &self.factors, &self.augmenters, self.seed);
            let outs: Vec<Result<StepOutput>> = (0..k)
                .into_par_iter()
                .map(|m| {
                    let path = [epoch as u64, bi as u64, m as u64];
                    let mixed = augs[m].augment(&batch, &mut stream(seed, &[tags::AUGMENT, path[0], path[1], path[2]]))?;
                    let mut drng = stream(seed, &[tags::DROPOUT, path[0], path[1], path[2]]);
                    shared.step(mixed.x.view(), Some(&factors.members[m]), &mixed.targets, 0.0, ForwardMode::Train, &mut drng)
                })
                .collect();
            let mut grads = Gradients::zeros_like(&self.shared);
            let mut factor_grads = Vec::with_capacity(k);
            let mut loss = 0.0;
            for (m, out) in outs.into_iter().enumerate() {
                let out = out?;
                check_step(&out, epoch)?;
                grads.add_scaled(&out.grads, 1.0 / k as f64);
                loss += out.loss;
                if self.augmenters[m].tracker.is_some() {
                    let clean = batchensemble_forward(&self.shared, &self.factors, m, batch.x.view())?;
                    self.augmenters[m].observe_batch(&batch, &clean)?;
                }
                let mut fg = out.factor_grads.expect("factors supplied");
                for f in &mut fg {
                    f.r /= k as f64;
                    f.s /= k as f64;
                }
                factor_grads.push(fg);
            }
            for (g, l) in grads.layers.iter_mut().zip(&self.shared.layers) {
                g.weight.scaled_add(config.l2, &l.weight);
            }
            self.sgd.step(&mut self.shared, &grads, config, epoch)?;
            let lr = config.lr_at(epoch);
            for ((member, fg), opt) in self.factors.members.iter_mut().zip(&factor_grads).zip(&mut self.factor_opt) {
                let params: Vec<&mut [f64]> = member
                    .iter_mut()
                    .flat_map(|f| [f.r.as_slice_mut().expect("contiguous"), f.s.as_slice_mut().expect("contiguous")])
                    .collect();
                let grads: Vec<&[f64]> = fg
                    .iter()
                    .flat_map(|f| [f.r.as_slice().expect("contiguous"), f.s.as_slice().expect("contiguous")])
                    .collect();
                opt.apply(params, grads, lr, config.momentum);
            }
            total += loss / k as f64 * batch.indices.len() as f64;
        }
        Ok(total / train.len() as f64)
    }
}

enum State {
    Deep(Vec<Learner>),
    McDropout { learner: Learner, samples: usize },
    BatchEnsemble(BatchEnsembleState),
}

impl State {
    fn run_epoch(&mut self, train: &LabeledDataset, config: &TrainConfig, epoch: usize) -> Result<f64> {
        match self {
            State::Deep(learners) => {
                let losses: Vec<Result<f64>> = learners.par_iter_mut().map(|l| l.run_epoch(train, config, epoch)).collect();
                let mut sum = 0.0;
                for l in losses {
                    sum += l?;
                }
                Ok(sum / learners.len() as f64)
            }
            State::McDropout { learner, .. } => learner.run_epoch(train, config, epoch),
            State::BatchEnsemble(be) => be.run_epoch(train, config, epoch),
        }
    }

    fn predict(&self, x: ArrayView2<f64>, rng: &mut RngStream) -> Result<PredictionBatch> {
        let members = match self {
            State::Deep(learners) => learners
                .iter()
                .map(|l| l.net.forward(x, ForwardMode::Eval, rng))
                .collect::<Result<Vec<_>>>()?,
            State::McDropout { learner, samples } => (0..*samples)
                .map(|_| learner.net.forward(x, ForwardMode::McDropout, rng))
                .collect::<Result<Vec<_>>>()?,
            State::BatchEnsemble(be) => (0..be.factors.k())
                .map(|k| batchensemble_forward(&be.shared, &be.factors, k, x))
                .collect::<Result<Vec<_>>>()?,
        };
        aggregate(&members)
    }

    fn augmenters(&self) -> Vec<&Augmenter> {
        match self {
            State::Deep(learners) => learners.iter().map(|l| &l.augmenter).collect(),
            State::McDropout { learner, .. } => vec![&learner.augmenter],
            State::BatchEnsemble(be) => be.augmenters.iter().collect(),
        }
    }

    fn augmenters_mut(&mut self) -> Vec<&mut Augmenter> {
        match self {
            State::Deep(learners) => learners.iter_mut().map(|l| &mut l.augmenter).collect(),
            State::McDropout { learner, .. } => vec![&mut learner.augmenter],
            State::BatchEnsemble(be) => be.augmenters.iter_mut().collect(),
        }
    }

    fn into_model(self) -> EnsembleModel {
        match self {
            State::Deep(learners) => EnsembleModel::Deep {
                seeds: learners.iter().map(|l| l.seed).collect(),
                members: learners.into_iter().map(|l| l.net).collect(),
            },
            State::McDropout { learner, samples } => EnsembleModel::McDropout {
                net: learner.net,
                samples,
                seed: learner.seed,
            },
            State::BatchEnsemble(be) => EnsembleModel::BatchEnsemble {
                shared: be.shared,
                factors: be.factors,
                seed: be.seed,
            },
        }
    }
}

/// Trains an ensemble on `splits.train`.
///
/// Learners advance in lockstep one epoch at a time. Class-gated strategies
/// refresh a single policy after every epoch from the aggregated validation
/// predictions and share it across learners; the policy in force during
/// epoch `e` is what the log records for `e`.
pub fn train_ensemble(
    spec: &EnsembleSpec,
    splits: &Splits,
    config: &TrainConfig,
    strategy: &AugmentStrategy,
) -> Result<Trained> {
    spec.validate()?;
    config.validate()?;
    strategy.validate()?;
    let train = &splits.train;
    if train.is_empty() {
        return Err(Error::Input("empty training split".into()));
    }
    if strategy.uses_class_policy() && splits.val.is_empty() {
        return Err(Error::Input("class-gated Mixup needs a validation split".into()));
    }
    let dims = spec.dims(train.dim(), train.n_classes);
    let seed = config.seed;
    let mut state = match spec.mode {
        EnsembleMode::Deep => State::Deep(
            (0..spec.k)
                .map(|k| Learner::new(&dims, 0.0, member_seed(seed, k), strategy, train))
                .collect::<Result<_>>()?,
        ),
        EnsembleMode::McDropout => State::McDropout {
            learner: Learner::new(&dims, spec.dropout_rate, seed, strategy, train)?,
            samples: spec.k,
        },
        EnsembleMode::BatchEnsemble => {
            let shared = DenseNet::new(&dims, 0.0, &mut stream(seed, &[tags::INIT]))?;
            let factors = RankOneFactors::random(&shared, spec.k, spec.factor_std, &mut stream(seed, &[tags::FACTORS]))?;
            State::BatchEnsemble(BatchEnsembleState {
                shared,
                factors,
                sgd: Sgd::new(),
                factor_opt: vec![Momentum::new(); spec.k],
                augmenters: (0..spec.k)
                    .map(|_| Augmenter::new(strategy.clone(), train.n_classes, train.len()))
                    .collect::<Result<_>>()?,
                seed,
            })
        }
    };

    let val_labels = splits.val.hard_labels();
    let reading = strategy.conf_reading();
    let mut log = TrainLog::default();
    for epoch in 0..config.epochs {
        if let Some(policy) = &state.augmenters()[0].policy {
            log.policy.extend(
                policy
                    .per_class_enabled
                    .iter()
                    .enumerate()
                    .map(|(class, &enabled)| PolicyRow { epoch, class, enabled }),
            );
        }
        let loss = state.run_epoch(train, config, epoch)?;
        log.epochs.push(EpochSummary { epoch, lr: config.lr_at(epoch), loss });
        for (member, aug) in state.augmenters().iter().enumerate() {
            if let Some(t) = &aug.tracker {
                log.forgetting_epochs.push(ForgettingEpochRow { epoch, member, n_enabled: t.n_enabled() });
            }
        }
        let current = state.augmenters()[0].policy.clone();
        if let (Some(policy), true) = (current, epoch + 1 < config.epochs) {
            let val = state.predict(splits.val.features.view(), &mut stream(seed, &[tags::VALIDATE, epoch as u64]))?;
            let out = camixup_refresh(&policy, &val, &val_labels, epoch, reading)?;
            for aug in state.augmenters_mut() {
                aug.policy = Some(out.policy.clone());
            }
        }
    }
    for (member, aug) in state.augmenters().iter().enumerate() {
        if let Some(t) = &aug.tracker {
            log.forgetting.extend((0..t.len()).map(|example| ForgettingRow {
                member,
                example,
                forget_count: t.forget_count[example],
                coeff: t.mixup_coeff[example],
            }));
        }
    }
    Ok(Trained { model: state.into_model(), log })
}

/// A single network trained exactly as member 0 of a deep ensemble.
pub fn train_single(
    hidden: &[usize],
    splits: &Splits,
    config: &TrainConfig,
    strategy: &AugmentStrategy,
) -> Result<(DenseNet, TrainLog)> {
    let spec = EnsembleSpec { mode: EnsembleMode::Deep, k: 1, hidden: hidden.to_vec(), ..EnsembleSpec::default() };
    let Trained { model, log } = train_ensemble(&spec, splits, config, strategy)?;
    match model {
        EnsembleModel::Deep { mut members, .. } => Ok((members.remove(0), log)),
        _ => unreachable!("deep spec yields a deep model"),
    }
}
