//! Label and input augmentation: Mixup, label smoothing, AugMix, AugMixup,
//! class-gated CAMixup and forgetting-count CAMixup.
//!
//! Every operation takes an explicit RNG stream. Gated variants draw their
//! randomness in the same order as [`mixup_batch`] (partners, then λ), so with
//! every gate open they reproduce it exactly.

mod augmix;
mod camixup;
mod forgetting;
mod mixup;
mod strategy;

pub use augmix::{augmix, augmixup, sample_dirichlet, AugMixParams, AugmentOp, AugmentOpKind, AugmentOpSet};
pub use camixup::{
    augcamixup_apply, camixup_apply, camixup_refresh, class_stats, ClassStats, ConfReading, MixupPolicy, RefreshOutcome,
};
pub use forgetting::{forgetting_apply, forgetting_policy, forgetting_update, ForgettingTracker};
pub use mixup::{label_smooth, mixup_batch, MixedBatch};
pub use strategy::{AugmentStrategy, Augmenter};
