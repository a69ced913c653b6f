use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Output transform applied after the last affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    MeanSquaredError,
    CrossEntropy,
}

/// Dense layer with row-major `out × in` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) biases: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.biases).map(|(row, b)| {
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// Feed-forward network: ReLU on every hidden layer, then a linear or softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub(crate) layers: Vec<Layer>,
    pub(crate) head: OutputHead,
}

/// Gradient of the loss, shaped like the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    /// Flattened in the same order as [`MlpModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

impl MlpModel {
    /// He-style uniform initialisation: weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn new(layer_sizes: &[usize], head: OutputHead, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_sizes, head)?;
        let mut rng = seed::rng(seed);
        for layer in &mut model.layers {
            let bound = (6.0 / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(layer_sizes: &[usize], head: OutputHead) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output sizes".into()));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self { layers, head })
    }

    pub(crate) fn from_layers(layers: Vec<Layer>, head: OutputHead) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                });
            }
        }
        let model = Self { layers, head };
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(model)
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.logits(input)?;
        if self.head == OutputHead::Softmax {
            softmax_in_place(&mut out);
        }
        Ok(out)
    }

    /// Index of the largest output; ties resolve to the lowest index.
    pub fn predict_class(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    /// Mean loss over the rows and its analytic gradient.
    ///
    /// MSE is the per-row sum of squared output errors, averaged over rows.
    /// Cross-entropy expects a softmax head and probability-vector targets.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
        loss: Loss,
    ) -> Result<(f64, Gradient)> {
        if inputs.is_empty() {
            return Err(Error::Contract("loss over an empty batch".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        self.check_loss(loss)?;
        let mut grad = Gradient::zeros_like(self);
        let mut total = 0.0;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();
        let scale = 1.0 / inputs.len() as f64;
        let last = self.layers.len() - 1;

        for (x, t) in inputs.iter().zip(targets) {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
            if t.len() != self.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.output_dim(),
                    got: t.len(),
                });
            }
            // Forward, keeping post-activation outputs of every layer.
            acts.clear();
            acts.push(x.to_vec());
            for (i, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.out_dim);
                layer.affine(&acts[i], &mut out);
                if i < last {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(out);
            }
            let y = acts.last_mut().unwrap();

            // dL/d(logits) for this row.
            delta.clear();
            match loss {
                Loss::MeanSquaredError => {
                    for (yi, ti) in y.iter().zip(t.iter()) {
                        let e = yi - ti;
                        total += e * e;
                        delta.push(2.0 * e * scale);
                    }
                }
                Loss::CrossEntropy => {
                    let lse = log_sum_exp(y);
                    for (yi, ti) in y.iter().zip(t.iter()) {
                        if *ti > 0.0 {
                            total -= ti * (yi - lse);
                        }
                    }
                    let tsum: f64 = t.iter().sum();
                    for (yi, ti) in y.iter().zip(t.iter()) {
                        delta.push(((yi - lse).exp() * tsum - ti) * scale);
                    }
                }
            }

            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let input = &acts[i];
                let gw = &mut grad.weights[i];
                for (j, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grad.biases[i][j] += d;
                    for (g, a) in gw[j * layer.in_dim..(j + 1) * layer.in_dim].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if i > 0 {
                    prev_delta.clear();
                    prev_delta.resize(layer.in_dim, 0.0);
                    for (j, d) in delta.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        for (p, w) in prev_delta
                            .iter_mut()
                            .zip(&layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim])
                        {
                            *p += d * w;
                        }
                    }
                    // ReLU derivative: active iff the hidden output is positive.
                    for (p, a) in prev_delta.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    std::mem::swap(&mut delta, &mut prev_delta);
                }
            }
        }
        Ok((total * scale, grad))
    }

    /// Mean loss only, for evaluation and finite differences.
    pub fn loss(&self, inputs: &[&[f64]], targets: &[&[f64]], loss: Loss) -> Result<f64> {
        self.check_loss(loss)?;
        let mut total = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            total += match loss {
                Loss::MeanSquaredError => {
                    let y = self.forward(x)?;
                    y.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                }
                Loss::CrossEntropy => {
                    let z = self.logits(x)?;
                    let lse = log_sum_exp(&z);
                    -z.iter()
                        .zip(t.iter())
                        .filter(|(_, ti)| **ti > 0.0)
                        .map(|(zi, ti)| ti * (zi - lse))
                        .sum::<f64>()
                }
            };
        }
        Ok(total / inputs.len() as f64)
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn check_loss(&self, loss: Loss) -> Result<()> {
        match (loss, self.head) {
            (Loss::CrossEntropy, OutputHead::Softmax) | (Loss::MeanSquaredError, OutputHead::Linear) => Ok(()),
            _ => Err(Error::Config(format!(
                "loss {loss:?} is not paired with a {:?} head",
                self.head
            ))),
        }
    }

    pub(crate) fn apply_update(&mut self, velocity: &mut Gradient, grad: &Gradient, lr: f64, momentum: f64) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for ((w, v), g) in layer.weights.iter_mut().zip(&mut velocity.weights[i]).zip(&grad.weights[i]) {
                *v = momentum * *v - lr * g;
                *w += *v;
            }
            for ((b, v), g) in layer.biases.iter_mut().zip(&mut velocity.biases[i]).zip(&grad.biases[i]) {
                *v = momentum * *v - lr * g;
                *b += *v;
            }
        }
    }

    pub(crate) fn zero_gradient(&self) -> Gradient {
        Gradient::zeros_like(self)
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(x: &mut [f64]) {
    let lse = log_sum_exp(x);
    x.iter_mut().for_each(|v| *v = (*v - lse).exp());
}

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub worst_param: usize,
    pub params_checked: usize,
}

/// Compares every analytic partial derivative with `(L(θ+ε) − L(θ−ε)) / 2ε`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`. Below 1e-6 the
/// central difference itself is dominated by rounding of the loss, so such
/// gradients are judged on an absolute scale.
pub fn gradient_check(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[&[f64]],
    loss: Loss,
    eps: f64,
) -> Result<GradientCheck> {
    let (_, grad) = model.loss_and_gradient(inputs, targets, loss)?;
    let analytic = grad.flat();
    let base = model.params();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        params[i] = base[i] + eps;
        probe.set_params(&params)?;
        let up = probe.loss(inputs, targets, loss)?;
        params[i] = base[i] - eps;
        probe.set_params(&params)?;
        let down = probe.loss(inputs, targets, loss)?;
        params[i] = base[i];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst.0,
        worst_param: worst.1,
        params_checked: params.len(),
    })
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[3, 5, 2], OutputHead::Linear).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut m = MlpModel::zeros(&[3, 3], OutputHead::Linear).unwrap();
        m.layers[0].weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(m.forward(&[0.5, -2.0, 7.0]).unwrap(), vec![0.5, -2.0, 7.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = MlpModel::new(&[4, 8, 2], OutputHead::Linear, 0).unwrap();
        assert!(matches!(
            m.forward(&[1.0; 3]),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
        assert!(MlpModel::zeros(&[4], OutputHead::Linear).is_err());
        assert!(MlpModel::zeros(&[4, 0, 2], OutputHead::Linear).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss_and_gradient() {
        let m = MlpModel::new(&[2, 6, 2], OutputHead::Linear, 3).unwrap();
        let xs = [[0.3, -0.1], [1.0, 2.0]];
        let ts: Vec<Vec<f64>> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
        let xr: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let tr: Vec<&[f64]> = ts.iter().map(|t| t.as_slice()).collect();
        let (l, g) = m.loss_and_gradient(&xr, &tr, Loss::MeanSquaredError).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn uniform_softmax_cross_entropy_is_ln_c() {
        let m = MlpModel::zeros(&[3, 7], OutputHead::Softmax).unwrap();
        let x = [0.2, 0.4, -1.0];
        let mut t = [0.0; 7];
        t[4] = 1.0;
        let (l, _) = m.loss_and_gradient(&[&x], &[&t], Loss::CrossEntropy).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_outputs_positive() {
        let m = MlpModel::new(&[3, 8, 4], OutputHead::Softmax, 9).unwrap();
        let p = m.forward(&[0.1, -0.7, 0.4]).unwrap();
        assert!(p.iter().all(|v| *v > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn head_and_loss_must_agree() {
        let m = MlpModel::zeros(&[1, 2], OutputHead::Linear).unwrap();
        assert!(m.loss_and_gradient(&[&[0.0]], &[&[1.0, 0.0]], Loss::CrossEntropy).is_err());
    }

    #[test]
    fn params_round_trip() {
        let m = MlpModel::new(&[3, 4, 2], OutputHead::Softmax, 1).unwrap();
        let mut z = MlpModel::zeros(&[3, 4, 2], OutputHead::Softmax).unwrap();
        z.set_params(&m.params()).unwrap();
        assert_eq!(z, m);
        assert_eq!(m.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    proptest! {
        #[test]
        fn softmax_is_a_simplex(x in proptest::collection::vec(-50.0f64..50.0, 4), seed in 0u64..1000) {
            let m = MlpModel::new(&[4, 16, 5], OutputHead::Softmax, seed).unwrap();
            let p = m.forward(&x).unwrap();
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
