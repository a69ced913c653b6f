//! A small dependency-free multilayer perceptron.
//!
//! Used for the force regressor and for every classifier in the crate.
//! Training is mini-batch SGD with momentum, with a fixed shuffle order per
//! seed so identical inputs give bit-identical weights.

pub mod format;
mod mlp;

pub use mlp::{argmax, gradient_check, Gradient, GradientCheck, Layer, Loss, MlpModel, OutputHead};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    All,
    Train,
    Test,
}

/// Row-major `N × D` inputs with `N × K` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    input_dim: usize,
    target_dim: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, input_dim: usize, target_dim: usize) -> Result<Self> {
        if input_dim == 0 || target_dim == 0 {
            return Err(Error::Config("dataset dimensions must be positive".into()));
        }
        if inputs.len() % input_dim != 0 || targets.len() % target_dim != 0 {
            return Err(Error::Config("dataset buffers are not whole rows".into()));
        }
        let n = inputs.len() / input_dim;
        if n == 0 {
            return Err(Error::Config("dataset is empty".into()));
        }
        if targets.len() / target_dim != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: targets.len() / target_dim,
            });
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self {
            inputs,
            targets,
            input_dim,
            target_dim,
            split: Split::All,
        })
    }

    /// One-hot targets from class labels.
    pub fn classification(inputs: Vec<f64>, input_dim: usize, labels: &[usize], classes: usize) -> Result<Self> {
        let mut targets = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::Config(format!("label {l} out of range for {classes} classes")));
            }
            targets[i * classes + l] = 1.0;
        }
        Self::new(inputs, targets, input_dim, classes)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.target_dim..(i + 1) * self.target_dim]
    }

    /// Class index of row `i` (argmax of its target).
    pub fn label(&self, i: usize) -> usize {
        argmax(self.target(i))
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(rows.len() * self.input_dim);
        let mut targets = Vec::with_capacity(rows.len() * self.target_dim);
        for &r in rows {
            inputs.extend_from_slice(self.input(r));
            targets.extend_from_slice(self.target(r));
        }
        Self::new(inputs, targets, self.input_dim, self.target_dim)
    }

    /// Seeded shuffle, then the first `train_fraction` of rows become the train split.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (train, test) = self.split_indices(train_fraction, seed)?;
        let mut a = self.subset(&train)?;
        let mut b = self.subset(&test)?;
        a.split = Split::Train;
        b.split = Split::Test;
        Ok((a, b))
    }

    pub fn split_indices(&self, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config("train fraction must lie in (0, 1)".into()));
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seed::rng(seed));
        let cut = ((n as f64 * train_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
        if cut >= n {
            return Err(Error::Config("dataset too small to split".into()));
        }
        let test = idx.split_off(cut);
        Ok((idx, test))
    }

    pub fn rows(&self) -> (Vec<&[f64]>, Vec<&[f64]>) {
        ((0..self.len()).map(|i| self.input(i)).collect(), (0..self.len()).map(|i| self.target(i)).collect())
    }
}

/// Default train/test split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Learning rate is multiplied by this factor after every epoch.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_decay() -> f64 {
    1.0
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, batch_size: usize, seed: u64, loss: Loss) -> Self {
        Self {
            learning_rate,
            epochs,
            batch_size,
            seed,
            loss,
            momentum: default_momentum(),
            lr_decay: default_decay(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    /// Mean mini-batch loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch SGD with momentum.
///
/// Each epoch draws a fresh permutation from the seeded generator; the
/// gradient of a batch is accumulated row by row in permutation order.
pub fn train(model_init: &MlpModel, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    if data.input_dim() != model_init.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model_init.input_dim(),
            got: data.input_dim(),
        });
    }
    if data.target_dim() != model_init.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: model_init.output_dim(),
            got: data.target_dim(),
        });
    }
    let mut model = model_init.clone();
    let mut velocity = model.zero_gradient();
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.input(i)).collect();
            let ts: Vec<&[f64]> = batch.iter().map(|&i| data.target(i)).collect();
            let (loss, grad) = model.loss_and_gradient(&xs, &ts, cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1;
            model.apply_update(&mut velocity, &grad, lr, cfg.momentum);
        }
        let mean = epoch_loss / batches as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        history.push(mean);
        lr *= cfg.lr_decay;
    }
    Ok(Trained {
        model,
        loss_history: history,
    })
}

/// Fraction of rows whose predicted class matches the target's argmax.
pub fn accuracy(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    for i in 0..data.len() {
        if model.predict_class(data.input(i))? == data.label(i) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Mean over rows of the summed squared output error.
pub fn mean_squared_error(model: &MlpModel, data: &Dataset) -> Result<f64> {
    let (xs, ts) = data.rows();
    let mut total = 0.0;
    for (x, t) in xs.iter().zip(&ts) {
        let y = model.forward(x)?;
        total += y.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![], 2, 1).is_err());
        assert!(Dataset::new(vec![1.0, f64::NAN], vec![0.0], 2, 1).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![0.0, 1.0], 2, 1).is_err());
        let d = Dataset::classification(vec![0.0, 1.0, 2.0], 1, &[0, 2, 1], 3).unwrap();
        for i in 0..3 {
            assert_eq!(d.target(i).iter().sum::<f64>(), 1.0);
        }
        assert_eq!(d.label(1), 2);
        assert!(Dataset::classification(vec![0.0], 1, &[3], 3).is_err());
    }

    #[test]
    fn split_is_seeded_partition() {
        let d = Dataset::new((0..100).map(|i| i as f64).collect(), vec![0.0; 100], 1, 1).unwrap();
        let (tr, te) = d.split_indices(0.8, 4).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(d.split_indices(0.8, 4).unwrap(), (tr, te));
    }

    fn separable(n: usize, seed: u64) -> Dataset {
        // Two classes on either side of x0 + x1 = 0 with margin 1.
        let mut rng = seed::rng(seed);
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        while ls.len() < n {
            let p: [f64; 2] = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let s = (p[0] + p[1]) / 2f64.sqrt();
            if s.abs() < 1.0 {
                continue;
            }
            xs.extend_from_slice(&p);
            ls.push(usize::from(s > 0.0));
        }
        Dataset::classification(xs, 2, &ls, 2).unwrap()
    }

    #[test]
    fn separable_two_class_reaches_99_percent() {
        let data = separable(400, 1);
        let init = MlpModel::new(&[2, 16, 2], OutputHead::Softmax, 2).unwrap();
        let cfg = TrainConfig::new(0.05, 200, 32, 3, Loss::CrossEntropy);
        let out = train(&init, &data, &cfg).unwrap();
        assert!(accuracy(&out.model, &data).unwrap() >= 0.99);
    }

    #[test]
    fn identity_regression_fits() {
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
        let data = Dataset::new(xs.clone(), xs, 1, 1).unwrap();
        let (train_set, test_set) = data.split(0.8, 0).unwrap();
        let init = MlpModel::new(&[1, 8, 1], OutputHead::Linear, 5).unwrap();
        let mut cfg = TrainConfig::new(0.01, 400, 16, 6, Loss::MeanSquaredError);
        cfg.lr_decay = 0.995;
        let out = train(&init, &train_set, &cfg).unwrap();
        let mse = mean_squared_error(&out.model, &test_set).unwrap();
        assert!(mse < 1e-4, "test mse {mse}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = separable(100, 7);
        let init = MlpModel::new(&[2, 8, 2], OutputHead::Softmax, 8).unwrap();
        let cfg = TrainConfig::new(0.05, 20, 10, 9, Loss::CrossEntropy);
        let a = train(&init, &data, &cfg).unwrap();
        let b = train(&init, &data, &cfg).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn full_batch_loss_is_non_increasing_at_small_lr() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        let data = Dataset::new(xs, ys, 1, 1).unwrap();
        let init = MlpModel::new(&[1, 8, 1], OutputHead::Linear, 1).unwrap();
        let cfg = TrainConfig::new(1e-3, 300, 50, 0, Loss::MeanSquaredError);
        let out = train(&init, &data, &cfg).unwrap();
        for w in out.loss_history.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = Dataset::new(vec![1e6, -1e6], vec![1e6, -1e6], 1, 1).unwrap();
        let init = MlpModel::new(&[1, 4, 1], OutputHead::Linear, 0).unwrap();
        let cfg = TrainConfig::new(10.0, 50, 2, 0, Loss::MeanSquaredError);
        assert!(matches!(train(&init, &data, &cfg), Err(Error::Diverged { .. })));
    }
}
