use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{SoftLabels, LOG_EPS};
use crate::error::{shape_err, Error, Result};
use crate::rng::RngStream;

/// Per-example class-probability rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBatch {
    probs: Array2<f64>,
}

impl PredictionBatch {
    /// Wraps a probability matrix, checking every row is a distribution.
    pub fn from_probs(probs: Array2<f64>) -> Result<Self> {
        for (i, row) in probs.outer_iter().enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + 1e-12) {
                return Err(Error::Input(format!("row {i} has entries outside [0, 1]")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Input(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_probs_unchecked(probs: Array2<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn into_probs(self) -> Array2<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.probs.ncols()
    }

    /// Arg-max label per row (first index on ties).
    pub fn predicted(&self) -> Vec<usize> {
        self.probs.outer_iter().map(|r| argmax(r.iter().copied())).collect()
    }

    /// Max probability per row.
    pub fn confidence(&self) -> Vec<f64> {
        self.probs
            .outer_iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let correct = self
            .predicted()
            .iter()
            .zip(labels)
            .filter(|(p, y)| p == y)
            .count();
        correct as f64 / labels.len().max(1) as f64
    }
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in it.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let s = row.sum();
        row.mapv_inplace(|e| e / s);
    }
    out
}

/// One fully connected layer, `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multiplicative rank-1 perturbation of a layer's weight: `W ∘ (r sᵀ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOne {
    /// Output-side factor, length `out`.
    pub r: Array1<f64>,
    /// Input-side factor, length `in`.
    pub s: Array1<f64>,
}

impl RankOne {
    pub fn ones(out_dim: usize, in_dim: usize) -> Self {
        Self {
            r: Array1::ones(out_dim),
            s: Array1::ones(in_dim),
        }
    }

    /// The materialized factor matrix `r sᵀ`.
    pub fn matrix(&self) -> Array2<f64> {
        let r = self.r.view().insert_axis(Axis(1));
        let s = self.s.view().insert_axis(Axis(0));
        &r * &s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForwardMode {
    /// Dropout active.
    Train,
    /// Dropout inactive.
    Eval,
    /// Evaluation with dropout masks sampled, as used by MC-Dropout.
    McDropout,
}

impl ForwardMode {
    fn dropout_active(self) -> bool {
        !matches!(self, ForwardMode::Eval)
    }
}

/// Feed-forward ReLU network with a softmax head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
    pub dropout_rate: f64,
}

/// Activations recorded during a forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each layer (post-dropout for hidden layers).
    inputs: Vec<Array2<f64>>,
    /// `input ∘ s` and `(input ∘ s) Wᵀ` per layer, when a rank-1 perturbation is applied.
    scaled: Vec<Option<(Array2<f64>, Array2<f64>)>>,
    /// Pre-activations per layer.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks after each hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    pub probs: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.weight.as_slice_memory_order().expect("contiguous"));
            out.push(l.bias.as_slice_memory_order().expect("contiguous"));
        }
        out
    }
}

/// Loss, gradients and probabilities of one training step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: f64,
    pub grads: Gradients,
    pub factor_grads: Option<Vec<RankOne>>,
    pub probs: Array2<f64>,
}

impl DenseNet {
    /// He-initialized network with layer widths `dims` (input first, classes last).
    pub fn new(dims: &[usize], dropout_rate: f64, rng: &mut RngStream) -> Result<Self> {
        check_dims(dims, dropout_rate)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let (d, m) = (w[0], w[1]);
                let std = (2.0 / d as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((m, d), || {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                });
                Dense {
                    weight,
                    bias: Array1::zeros(m),
                }
            })
            .collect();
        Ok(Self {
            layers,
            dropout_rate,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims, 0.0)?;
        Ok(Self {
            layers: dims
                .windows(2)
                .map(|w| Dense {
                    weight: Array2::zeros((w[1], w[0])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
            dropout_rate: 0.0,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, dropout_rate: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!("dropout rate {dropout_rate} not in [0, 1)")));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return shape_err(format!("layer {i}: bias length {} vs {}", l.bias.len(), l.output_dim()));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return shape_err(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].output_dim(),
                    i + 1,
                    w[1].input_dim()
                ));
            }
        }
        Ok(Self {
            layers,
            dropout_rate,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map(Dense::output_dim).unwrap_or(0)
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_memory_order_mut().expect("contiguous"));
            out.push(l.bias.as_slice_memory_order_mut().expect("contiguous"));
        }
        out
    }

    pub fn forward(&self, x: ArrayView2<f64>, mode: ForwardMode, rng: &mut RngStream) -> Result<PredictionBatch> {
        self.forward_scaled(x, None, mode, rng)
    }

    /// Forward pass with an optional rank-1 perturbation on every layer.
    pub fn forward_scaled(
        &self,
        x: ArrayView2<f64>,
        scales: Option<&[RankOne]>,
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<PredictionBatch> {
        let trace = self.trace(x, scales, mode, rng)?;
        Ok(PredictionBatch::from_probs_unchecked(trace.probs))
    }

    pub fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return shape_err(format!("input has {} columns, network expects {}", x.ncols(), self.input_dim()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite input feature".into()));
        }
        Ok(())
    }

    fn check_scales(&self, scales: Option<&[RankOne]>) -> Result<()> {
        if let Some(sc) = scales {
            if sc.len() != self.layers.len() {
                return shape_err(format!("{} rank-1 factors for {} layers", sc.len(), self.layers.len()));
            }
            for (i, (f, l)) in sc.iter().zip(&self.layers).enumerate() {
                if f.r.len() != l.output_dim() || f.s.len() != l.input_dim() {
                    return shape_err(format!("layer {i}: factor shapes do not match weight"));
                }
            }
        }
        Ok(())
    }

    /// Forward pass that keeps every intermediate needed by [`DenseNet::backprop`].
    pub fn trace(
        &self,
        x: ArrayView2<f64>,
        scales: Option<&[RankOne]>,
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<Trace> {
        self.check_input(&x)?;
        self.check_scales(scales)?;
        let n_layers = self.layers.len();
        let dropout = mode.dropout_active() && self.dropout_rate > 0.0;
        let keep_scale = 1.0 / (1.0 - self.dropout_rate);

        let mut inputs = Vec::with_capacity(n_layers);
        let mut scaled = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut masks = Vec::with_capacity(n_layers);
        let mut a = x.to_owned();

        for (li, layer) in self.layers.iter().enumerate() {
            let z = match scales.map(|s| &s[li]) {
                Some(f) => {
                    let u = &a * &f.s.view().insert_axis(Axis(0));
                    let v = u.dot(&layer.weight.t());
                    let z = &v * &f.r.view().insert_axis(Axis(0)) + &layer.bias;
                    scaled.push(Some((u, v)));
                    z
                }
                None => {
                    scaled.push(None);
                    a.dot(&layer.weight.t()) + &layer.bias
                }
            };
            inputs.push(a);
            if li + 1 < n_layers {
                let mut h = z.mapv(|v| v.max(0.0));
                if dropout {
                    let mask = Array2::from_shape_simple_fn(h.raw_dim(), || {
                        if rng.random::<f64>() < self.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    });
                    h *= &mask;
                    masks.push(Some(mask));
                } else {
                    masks.push(None);
                }
                a = h;
            } else {
                a = softmax_rows(&z);
            }
            pre.push(z);
        }

        Ok(Trace {
            inputs,
            scaled,
            pre,
            masks,
            probs: a,
        })
    }

    /// Exact gradient of mean soft cross-entropy plus `(l2/2)·‖W‖²` (weights only)
    /// for the pass recorded in `trace`.
    pub fn backprop(
        &self,
        trace: &Trace,
        scales: Option<&[RankOne]>,
        targets: &SoftLabels,
        l2: f64,
    ) -> Result<(Gradients, Option<Vec<RankOne>>)> {
        let t = targets.as_array();
        if t.dim() != trace.probs.dim() {
            return shape_err(format!("targets {:?} vs predictions {:?}", t.dim(), trace.probs.dim()));
        }
        let batch = t.nrows() as f64;
        let n_layers = self.layers.len();
        let mut grads: Vec<Option<LayerGrad>> = vec![None; n_layers];
        let mut fgrads: Vec<Option<RankOne>> = vec![None; n_layers];

        // Softmax + cross-entropy with ε in the log: with q_c = y_c p_c / (p_c + ε),
        // dL/dz_k = (p_k Σ_c q_c − q_k) / B, which reduces to (p − y) / B at ε = 0.
        let mut dz = Array2::zeros(trace.probs.raw_dim());
        for ((mut g, p), y) in dz.outer_iter_mut().zip(trace.probs.outer_iter()).zip(t.outer_iter()) {
            let q: Vec<f64> = p.iter().zip(y.iter()).map(|(&pc, &yc)| yc * pc / (pc + LOG_EPS)).collect();
            let q_sum: f64 = q.iter().sum();
            for ((gk, &pk), &qk) in g.iter_mut().zip(p.iter()).zip(&q) {
                *gk = (pk * q_sum - qk) / batch;
            }
        }

        for li in (0..n_layers).rev() {
            let layer = &self.layers[li];
            let bias = dz.sum_axis(Axis(0));
            let (dw, da) = match (scales.map(|s| &s[li]), &trace.scaled[li]) {
                (Some(f), Some((u, v))) => {
                    let dr = (&dz * v).sum_axis(Axis(0));
                    let dv = &dz * &f.r.view().insert_axis(Axis(0));
                    let dw = dv.t().dot(u);
                    let du = dv.dot(&layer.weight);
                    let ds = (&du * &trace.inputs[li]).sum_axis(Axis(0));
                    let da = &du * &f.s.view().insert_axis(Axis(0));
                    fgrads[li] = Some(RankOne { r: dr, s: ds });
                    (dw, da)
                }
                _ => {
                    let dw = dz.t().dot(&trace.inputs[li]);
                    let da = dz.dot(&layer.weight);
                    (dw, da)
                }
            };
            let mut dw = dw;
            if l2 != 0.0 {
                dw.scaled_add(l2, &layer.weight);
            }
            grads[li] = Some(LayerGrad { weight: dw, bias });

            if li > 0 {
                let mut dh = da;
                if let Some(mask) = &trace.masks[li - 1] {
                    dh *= mask;
                }
                Zip::from(&mut dh).and(&trace.pre[li - 1]).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                dz = dh;
            }
        }

        let grads = Gradients {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        };
        let fgrads = scales.map(|_| fgrads.into_iter().map(|g| g.expect("every layer visited")).collect());
        Ok((grads, fgrads))
    }

    /// Deterministic (dropout-free) gradient of the regularized soft cross-entropy.
    pub fn backward(&self, x: ArrayView2<f64>, targets: &SoftLabels, l2: f64) -> Result<Gradients> {
        let mut unused = crate::rng::stream(0, &[]);
        let trace = self.trace(x, None, ForwardMode::Eval, &mut unused)?;
        Ok(self.backprop(&trace, None, targets, l2)?.0)
    }

    /// Forward, loss and backward in one call.
    pub fn step(
        &self,
        x: ArrayView2<f64>,
        scales: Option<&[RankOne]>,
        targets: &SoftLabels,
        l2: f64,
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<StepOutput> {
        let trace = self.trace(x, scales, mode, rng)?;
        let loss = super::loss::cross_entropy_rows(&trace.probs, targets.as_array())?;
        let (grads, factor_grads) = self.backprop(&trace, scales, targets, l2)?;
        Ok(StepOutput {
            loss,
            grads,
            factor_grads,
            probs: trace.probs,
        })
    }
}

fn check_dims(dims: &[usize], dropout_rate: f64) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Config(format!("invalid layer widths {dims:?}")));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!("dropout rate {dropout_rate} not in [0, 1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;

    #[test]
    fn zero_net_is_uniform() {
        let net = DenseNet::zeros(&[3, 8, 5]).unwrap();
        let x = array![[1.0, -2.0, 0.5], [10.0, 3.0, -7.0]];
        let p = net.forward(x.view(), ForwardMode::Eval, &mut stream(0, &[])).unwrap();
        for v in p.probs() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_layer_softmax_value() {
        let layer = Dense {
            weight: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![0.0, 0.0],
        };
        let net = DenseNet::from_layers(vec![layer], 0.0).unwrap();
        let p = net
            .forward(array![[2.0, 0.0]].view(), ForwardMode::Eval, &mut stream(0, &[]))
            .unwrap();
        // e^2 / (e^2 + 1)
        let expected = 2f64.exp() / (2f64.exp() + 1.0);
        assert!((p.probs()[[0, 0]] - expected).abs() < 1e-12);
        assert!((p.probs()[[0, 0]] - 0.8808).abs() < 1e-4);
        assert!((p.probs()[[0, 1]] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let mut rng = stream(3, &[]);
        let net = DenseNet::new(&[2, 16, 16, 4], 0.0, &mut rng).unwrap();
        let x = array![[0.3, -1.2], [2.0, 0.1]];
        let a = net.forward(x.view(), ForwardMode::Train, &mut stream(1, &[])).unwrap();
        let b = net.forward(x.view(), ForwardMode::Eval, &mut stream(2, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_changes_train_output_only() {
        let net = DenseNet::new(&[2, 32, 3], 0.5, &mut stream(3, &[])).unwrap();
        let x = array![[0.3, -1.2]];
        let e1 = net.forward(x.view(), ForwardMode::Eval, &mut stream(1, &[])).unwrap();
        let e2 = net.forward(x.view(), ForwardMode::Eval, &mut stream(2, &[])).unwrap();
        assert_eq!(e1, e2);
        let t1 = net.forward(x.view(), ForwardMode::McDropout, &mut stream(1, &[])).unwrap();
        let t2 = net.forward(x.view(), ForwardMode::McDropout, &mut stream(2, &[])).unwrap();
        assert_ne!(t1, t2);
        let t1b = net.forward(x.view(), ForwardMode::McDropout, &mut stream(1, &[])).unwrap();
        assert_eq!(t1, t1b);
    }

    #[test]
    fn shape_and_input_errors() {
        let net = DenseNet::zeros(&[3, 4, 2]).unwrap();
        let mut rng = stream(0, &[]);
        assert!(matches!(
            net.forward(array![[1.0, 2.0]].view(), ForwardMode::Eval, &mut rng),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            net.forward(array![[1.0, f64::NAN, 0.0]].view(), ForwardMode::Eval, &mut rng),
            Err(Error::Input(_))
        ));
        let bad = vec![
            Dense { weight: Array2::zeros((4, 3)), bias: Array1::zeros(4) },
            Dense { weight: Array2::zeros((2, 5)), bias: Array1::zeros(2) },
        ];
        assert!(matches!(DenseNet::from_layers(bad, 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn perfect_prediction_has_zero_logit_gradient() {
        // Output layer only: softmax(Wx) equals the soft target exactly, so the
        // gradient vanishes up to the ε inside the log.
        let net = DenseNet::from_layers(
            vec![Dense { weight: array![[1.0], [0.0]], bias: array![0.0, 0.0] }],
            0.0,
        )
        .unwrap();
        let x = array![[1.5]];
        let p = net.forward(x.view(), ForwardMode::Eval, &mut stream(0, &[])).unwrap();
        let targets = SoftLabels::new(p.probs().clone()).unwrap();
        let g = net.backward(x.view(), &targets, 0.0).unwrap();
        assert!(g.layers[0].bias.iter().all(|v| v.abs() < 1e-10));
        assert!(g.layers[0].weight.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn weight_decay_component_is_linear_in_l2() {
        let net = DenseNet::new(&[2, 5, 3], 0.0, &mut stream(9, &[])).unwrap();
        let x = array![[0.5, -0.5], [1.0, 2.0]];
        let y = SoftLabels::from_hard(&[0, 2], 3).unwrap();
        let g0 = net.backward(x.view(), &y, 0.0).unwrap();
        let g1 = net.backward(x.view(), &y, 0.01).unwrap();
        let g2 = net.backward(x.view(), &y, 0.02).unwrap();
        for li in 0..2 {
            let d1 = &g1.layers[li].weight - &g0.layers[li].weight;
            let d2 = &g2.layers[li].weight - &g0.layers[li].weight;
            Zip::from(&d1).and(&d2).for_each(|a, b| assert!((2.0 * a - b).abs() < 1e-12));
            assert_eq!(g1.layers[li].bias, g0.layers[li].bias);
        }
    }

    #[test]
    fn rank_one_ones_matches_plain_forward() {
        let net = DenseNet::new(&[3, 6, 4], 0.0, &mut stream(4, &[])).unwrap();
        let x = array![[0.1, 0.2, -0.3], [1.0, -1.0, 0.5]];
        let ones: Vec<RankOne> = net.layers.iter().map(|l| RankOne::ones(l.output_dim(), l.input_dim())).collect();
        let mut rng = stream(0, &[]);
        let a = net.forward(x.view(), ForwardMode::Eval, &mut rng).unwrap();
        let b = net.forward_scaled(x.view(), Some(&ones), ForwardMode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
    }
}
