use serde::{Deserialize, Serialize};

use super::augmix::{augmix, augmixup, AugMixParams, AugmentOpSet};
use super::camixup::{augcamixup_apply, camixup_apply, camixup_refresh, ConfReading, MixupPolicy, RefreshOutcome};
use super::forgetting::{forgetting_apply, ForgettingTracker};
use super::mixup::{label_smooth, mixup_batch, MixedBatch};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::netcore::PredictionBatch;
use crate::rng::RngStream;

/// Training-time augmentation recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentStrategy {
    None,
    Mixup {
        a: f64,
    },
    LabelSmooth {
        alpha: f64,
    },
    Augmix {
        #[serde(default)]
        params: AugMixParams,
        #[serde(default)]
        opset: AugmentOpSet,
    },
    Augmixup {
        a: f64,
        #[serde(default)]
        params: AugMixParams,
        #[serde(default)]
        opset: AugmentOpSet,
    },
    Camixup {
        a: f64,
        #[serde(default)]
        conf_reading: ConfReading,
    },
    Augcamixup {
        a: f64,
        #[serde(default)]
        params: AugMixParams,
        #[serde(default)]
        opset: AugmentOpSet,
        #[serde(default)]
        conf_reading: ConfReading,
    },
    ForgettingCamixup {
        a: f64,
    },
}

impl AugmentStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentStrategy::None => "none",
            AugmentStrategy::Mixup { .. } => "mixup",
            AugmentStrategy::LabelSmooth { .. } => "label_smooth",
            AugmentStrategy::Augmix { .. } => "augmix",
            AugmentStrategy::Augmixup { .. } => "augmixup",
            AugmentStrategy::Camixup { .. } => "camixup",
            AugmentStrategy::Augcamixup { .. } => "augcamixup",
            AugmentStrategy::ForgettingCamixup { .. } => "forgetting_camixup",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |a: f64| {
            if a > 0.0 && a.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("Mixup concentration must be positive, got {a}")))
            }
        };
        match self {
            AugmentStrategy::None => Ok(()),
            AugmentStrategy::Mixup { a } | AugmentStrategy::Camixup { a, .. } | AugmentStrategy::ForgettingCamixup { a } => positive(*a),
            AugmentStrategy::LabelSmooth { alpha } => {
                if (0.0..1.0).contains(alpha) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("smoothing coefficient {alpha} not in [0, 1)")))
                }
            }
            AugmentStrategy::Augmix { params, opset } => check_augmix(params, opset),
            AugmentStrategy::Augmixup { a, params, opset } | AugmentStrategy::Augcamixup { a, params, opset, .. } => {
                positive(*a)?;
                check_augmix(params, opset)
            }
        }
    }

    /// Whether the strategy refreshes a class policy from validation predictions.
    pub fn uses_class_policy(&self) -> bool {
        matches!(self, AugmentStrategy::Camixup { .. } | AugmentStrategy::Augcamixup { .. })
    }

    pub fn uses_forgetting(&self) -> bool {
        matches!(self, AugmentStrategy::ForgettingCamixup { .. })
    }

    pub fn conf_reading(&self) -> ConfReading {
        match self {
            AugmentStrategy::Camixup { conf_reading, .. } | AugmentStrategy::Augcamixup { conf_reading, .. } => *conf_reading,
            _ => ConfReading::MaxProb,
        }
    }
}

fn check_augmix(params: &AugMixParams, opset: &AugmentOpSet) -> Result<()> {
    params.validate()?;
    if opset.ops.is_empty() {
        return Err(Error::Config("AugMix operation set is empty".into()));
    }
    Ok(())
}

/// Augmentation state owned by one learner (an ensemble member, or the single
/// MC-Dropout network).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmenter {
    pub strategy: AugmentStrategy,
    pub policy: Option<MixupPolicy>,
    pub tracker: Option<ForgettingTracker>,
}

impl Augmenter {
    pub fn new(strategy: AugmentStrategy, n_classes: usize, n_train: usize) -> Result<Self> {
        strategy.validate()?;
        let policy = match &strategy {
            AugmentStrategy::Camixup { a, .. } | AugmentStrategy::Augcamixup { a, .. } => Some(MixupPolicy::all_enabled(n_classes, *a)),
            _ => None,
        };
        let tracker = strategy.uses_forgetting().then(|| ForgettingTracker::new(n_train));
        Ok(Self { strategy, policy, tracker })
    }

    /// Produces the training inputs and targets for one minibatch.
    pub fn augment(&self, batch: &Batch, rng: &mut RngStream) -> Result<MixedBatch> {
        let x = batch.x.view();
        let y = &batch.targets;
        // A trailing batch of one cannot be paired; it trains unmixed.
        let pairable = batch.x.nrows() >= 2;
        match &self.strategy {
            AugmentStrategy::None => Ok(MixedBatch::passthrough(batch.x.clone(), y.clone())),
            AugmentStrategy::LabelSmooth { alpha } => Ok(MixedBatch::passthrough(
                batch.x.clone(),
                label_smooth(&batch.labels, y.n_classes(), *alpha)?,
            )),
            AugmentStrategy::Augmix { params, opset } => {
                Ok(MixedBatch::passthrough(augmix(x, opset, params, rng, None)?, y.clone()))
            }
            _ if !pairable => Ok(MixedBatch::passthrough(batch.x.clone(), y.clone())),
            AugmentStrategy::Mixup { a } => mixup_batch(x, y, *a, rng, None),
            AugmentStrategy::Augmixup { a, params, opset } => augmixup(x, y, opset, params, *a, rng, None),
            AugmentStrategy::Camixup { .. } => {
                camixup_apply(x, y, &batch.labels, self.policy.as_ref().expect("policy present"), rng)
            }
            AugmentStrategy::Augcamixup { params, opset, .. } => augcamixup_apply(
                x,
                y,
                &batch.labels,
                self.policy.as_ref().expect("policy present"),
                opset,
                params,
                rng,
            ),
            AugmentStrategy::ForgettingCamixup { .. } => {
                forgetting_apply(x, y, &batch.indices, self.tracker.as_ref().expect("tracker present"), rng)
            }
        }
    }

    /// Per-batch bookkeeping after the training forward pass.
    pub fn observe_batch(&mut self, batch: &Batch, train_probs: &PredictionBatch) -> Result<()> {
        if let (AugmentStrategy::ForgettingCamixup { a }, Some(tracker)) = (&self.strategy, self.tracker.as_mut()) {
            let correct: Vec<bool> = train_probs
                .predicted()
                .iter()
                .zip(&batch.labels)
                .map(|(p, y)| p == y)
                .collect();
            tracker.update(&batch.indices, &correct)?;
            tracker.refresh_policy(*a);
        }
        Ok(())
    }

    /// End-of-epoch refresh from validation predictions; `None` when the
    /// strategy has no class policy.
    pub fn refresh(&mut self, val_preds: &PredictionBatch, val_labels: &[usize], epoch: usize) -> Result<Option<RefreshOutcome>> {
        let reading = self.strategy.conf_reading();
        match self.policy.as_mut() {
            Some(policy) => {
                let out = camixup_refresh(policy, val_preds, val_labels, epoch, reading)?;
                *policy = out.policy.clone();
                Ok(Some(out))
            }
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_validation() {
        assert!(AugmentStrategy::Mixup { a: 0.0 }.validate().is_err());
        assert!(AugmentStrategy::LabelSmooth { alpha: 1.0 }.validate().is_err());
        assert!(AugmentStrategy::Augmix { params: AugMixParams { k: 0, ..Default::default() }, opset: AugmentOpSet::default() }
            .validate()
            .is_err());
        assert!(AugmentStrategy::Camixup { a: 1.0, conf_reading: ConfReading::MaxProb }.validate().is_ok());
    }

    #[test]
    fn strategy_serde_names() {
        let s: AugmentStrategy = toml::from_str("kind = \"forgetting_camixup\"\na = 0.5").unwrap();
        assert_eq!(s, AugmentStrategy::ForgettingCamixup { a: 0.5 });
        let s: AugmentStrategy = toml::from_str("kind = \"augcamixup\"\na = 1.0").unwrap();
        assert_eq!(s.name(), "augcamixup");
    }
}
