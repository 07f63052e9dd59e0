//! Minimal feed-forward network: dense ReLU layers, softmax head, exact
//! gradients for soft-label cross-entropy, momentum SGD with a step schedule,
//! and inverted dropout.

mod loss;
mod net;
mod optim;

pub use loss::{soft_cross_entropy, SoftLabels, LOG_EPS};
pub use net::{
    softmax_rows, Dense, DenseNet, ForwardMode, Gradients, LayerGrad, PredictionBatch, RankOne, StepOutput, Trace,
};
pub use optim::{Momentum, Sgd, TrainConfig};

pub(crate) use net::argmax;
