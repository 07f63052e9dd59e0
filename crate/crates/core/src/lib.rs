//! A small laboratory for studying how ensembles interact with soft-label
//! data augmentation, and how confidence-adjusted Mixup restores calibration.
//!
//! Modules:
//! - [`netcore`]: dense networks with analytic gradients and SGD.
//! - [`ensembles`]: deep ensembles, MC-Dropout and BatchEnsemble.
//! - [`augment`]: Mixup, label smoothing, AugMix, AugMixup, CAMixup and the
//!   forgetting-count variant.
//! - [`calibration`]: ECE, ACE, SCE, TACE, NLL, reliability data and
//!   temperature scaling.
//! - [`data`]: the synthetic cluster task, splits, minibatches and corruptions.
//! - [`harness`]: experiment configs, runs, comparisons and plot data.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod calibration;
pub mod data;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod netcore;
pub mod rng;

pub use error::{Error, Result};
pub use netcore::{DenseNet, PredictionBatch, SoftLabels, TrainConfig};
