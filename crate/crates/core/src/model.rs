//! Dense feed-forward classifier: ReLU hidden layers, softmax output,
//! class-weighted cross-entropy, SGD or Adam.
//!
//! Parameters live in one flat vector, layer by layer, each layer's weights
//! (row-major, `outputs x inputs`) followed by its biases. Gradients use the
//! same layout, which keeps optimizers and finite-difference checks simple.
//! All reductions run sample-major, class-minor, so results are bit-stable
//! for a fixed seed and data order.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::eval::ConfusionMatrix;
use crate::labels::{BehaviorClass, ClassCounts, UnknownLabel, NUM_CLASSES};
use crate::matrix::Matrix;
use crate::seed;

pub const MAX_HIDDEN_LAYERS: usize = 4;
/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input dimension must be positive")]
    ZeroInput,
    #[error("at least one hidden layer is required")]
    NoHiddenLayers,
    #[error("{0} hidden layers exceeds the maximum of 4")]
    TooManyHiddenLayers(usize),
    #[error("hidden layer {0} has zero width")]
    ZeroWidth(usize),
    #[error("input has {got} columns, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("class {0} has no samples; weight is undefined")]
    EmptyClass(BehaviorClass),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("loss became non-finite at epoch {0}")]
    Diverged(usize),
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        MlpConfig { input_dim, hidden: hidden.to_vec(), num_classes: NUM_CLASSES, seed }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::ZeroInput);
        }
        match self.hidden.len() {
            0 => return Err(ModelError::NoHiddenLayers),
            n if n > MAX_HIDDEN_LAYERS => return Err(ModelError::TooManyHiddenLayers(n)),
            _ => {}
        }
        if let Some(i) = self.hidden.iter().position(|&w| w == 0) {
            return Err(ModelError::ZeroWidth(i));
        }
        Ok(())
    }

    /// Layer widths including input and output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.num_classes);
        w
    }

    /// Same config with every hidden width halved, rounding up.
    pub fn halved(&self) -> MlpConfig {
        MlpConfig { hidden: halve_widths(&self.hidden), ..self.clone() }
    }
}

pub fn halve_widths(hidden: &[usize]) -> Vec<usize> {
    hidden.iter().map(|w| w.div_ceil(2)).collect()
}

/// Weights plus biases of every layer.
pub fn count_params(config: &MlpConfig) -> Result<usize, ModelError> {
    config.validate()?;
    Ok(config.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn bias(&self) -> core::ops::Range<usize> {
        let b = self.offset + self.inputs * self.outputs;
        b..b + self.outputs
    }
}

fn layout(config: &MlpConfig) -> Vec<LayerShape> {
    let mut offset = 0;
    config
        .widths()
        .windows(2)
        .map(|w| {
            let l = LayerShape { inputs: w[0], outputs: w[1], offset };
            offset += w[0] * w[1] + w[1];
            l
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Flat gradient, same layout as [`Mlp::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Mlp {
    /// Uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero biases,
    /// seeded by `config.seed`.
    pub fn init(config: MlpConfig) -> Result<Mlp, ModelError> {
        let total = count_params(&config)?;
        let layers = layout(&config);
        let mut params = vec![0.0; total];
        let mut rng = seed::rng(config.seed);
        for l in &layers {
            let limit = libm::sqrt(6.0 / (l.inputs + l.outputs) as f64);
            for p in &mut params[l.weights()] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Mlp { config, layers, params })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_params(config: MlpConfig, params: Vec<f64>) -> Result<Mlp, ModelError> {
        let expected = count_params(&config)?;
        if params.len() != expected {
            return Err(ModelError::ParamCount { expected, got: params.len() });
        }
        let layers = layout(&config);
        Ok(Mlp { config, layers, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `(inputs, outputs, weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (usize, usize, &[f64], &[f64]) {
        let s = self.layers[l];
        (s.inputs, s.outputs, &self.params[s.weights()], &self.params[s.bias()])
    }

    fn check_input(&self, x: &Matrix) -> Result<(), ModelError> {
        if x.cols() != self.config.input_dim {
            return Err(ModelError::Dimension { expected: self.config.input_dim, got: x.cols() });
        }
        Ok(())
    }

    /// Activations of every layer, input first, softmax output last.
    fn forward_all(&self, x: &Matrix) -> Vec<Matrix> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (li, l) in self.layers.iter().enumerate() {
            let w = &self.params[l.weights()];
            let b = &self.params[l.bias()];
            let prev = &acts[li];
            let mut out = Matrix::zeros(prev.rows(), l.outputs);
            let last = li + 1 == self.layers.len();
            for r in 0..prev.rows() {
                let input = prev.row(r);
                let row = out.row_mut(r);
                for (o, z) in row.iter_mut().enumerate() {
                    let wo = &w[o * l.inputs..(o + 1) * l.inputs];
                    let mut acc = b[o];
                    for (a, c) in wo.iter().zip(input) {
                        acc += a * c;
                    }
                    *z = if last || acc > 0.0 { acc } else { 0.0 };
                }
                if last {
                    softmax_in_place(row);
                }
            }
            acts.push(out);
        }
        acts
    }

    /// Class-probability rows.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        self.check_input(x)?;
        Ok(self.forward_all(x).pop().expect("output layer"))
    }

    /// Arg-max class per row; ties go to the lower class index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<BehaviorClass>, ModelError> {
        let probs = self.forward(x)?;
        Ok(probs.iter_rows().map(argmax_class).collect())
    }

    /// Gradient of [`weighted_ce_loss`] with respect to every parameter.
    pub fn backward(&self, x: &Matrix, labels: &[BehaviorClass], weights: &ClassWeights) -> Result<Gradients, ModelError> {
        self.check_input(x)?;
        if x.rows() != labels.len() {
            return Err(ModelError::LabelMismatch { rows: x.rows(), labels: labels.len() });
        }
        let acts = self.forward_all(x);
        Ok(self.backward_from(&acts, labels, weights))
    }

    fn backward_from(&self, acts: &[Matrix], labels: &[BehaviorClass], weights: &ClassWeights) -> Gradients {
        let n = labels.len();
        let mut grads = vec![0.0; self.params.len()];
        if n == 0 {
            return Gradients(grads);
        }
        // dL/dz at the output: w_y / N * (p - onehot(y))
        let probs = acts.last().expect("output layer");
        let mut delta = Matrix::zeros(n, self.config.num_classes);
        for (r, &y) in labels.iter().enumerate() {
            let scale = weights.get(y) / n as f64;
            let d = delta.row_mut(r);
            for (k, (dk, pk)) in d.iter_mut().zip(probs.row(r)).enumerate() {
                let target = if k == y.index() { 1.0 } else { 0.0 };
                *dk = scale * (pk - target);
            }
        }
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let input = &acts[li];
            let (gw, gb) = grads[l.offset..l.offset + l.inputs * l.outputs + l.outputs].split_at_mut(l.inputs * l.outputs);
            for r in 0..n {
                let d = delta.row(r);
                let a = input.row(r);
                for (o, &dk) in d.iter().enumerate() {
                    gb[o] += dk;
                    if dk != 0.0 {
                        for (g, &ai) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(a) {
                            *g += dk * ai;
                        }
                    }
                }
            }
            if li == 0 {
                break;
            }
            let w = &self.params[l.weights()];
            let mut prev = Matrix::zeros(n, l.inputs);
            for r in 0..n {
                let d = delta.row(r);
                let p = prev.row_mut(r);
                for (o, &dk) in d.iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    for (pi, &wi) in p.iter_mut().zip(&w[o * l.inputs..(o + 1) * l.inputs]) {
                        *pi += dk * wi;
                    }
                }
                // ReLU derivative from the stored activation
                for (pi, &ai) in p.iter_mut().zip(input.row(r)) {
                    if ai <= 0.0 {
                        *pi = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Gradients(grads)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// First index of the maximum.
pub fn argmax_class(row: &[f64]) -> BehaviorClass {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    BehaviorClass::from_index(best).expect("three-class row")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightMethod {
    /// `1 - x_i / sum(x)`
    Complement,
    /// `sum(x) / x_i`
    InverseFreqSum,
    /// `max(x) / x_i`
    InverseFreqMax,
}

impl WeightMethod {
    pub const ALL: [WeightMethod; 3] = [WeightMethod::Complement, WeightMethod::InverseFreqSum, WeightMethod::InverseFreqMax];

    pub fn as_str(self) -> &'static str {
        match self {
            WeightMethod::Complement => "complement",
            WeightMethod::InverseFreqSum => "inverse_freq_sum",
            WeightMethod::InverseFreqMax => "inverse_freq_max",
        }
    }
}

impl fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightMethod {
    type Err = UnknownLabel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WeightMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

/// Per-class loss weights, indexed by [`BehaviorClass`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl ClassWeights {
    pub const UNIT: ClassWeights = ClassWeights([1.0; NUM_CLASSES]);

    pub fn from_counts(method: WeightMethod, counts: &ClassCounts) -> Result<ClassWeights, ModelError> {
        if let Some(c) = counts.missing().next() {
            return Err(ModelError::EmptyClass(c));
        }
        let total = counts.total() as f64;
        let max = counts.0.iter().copied().max().unwrap_or(0) as f64;
        Ok(ClassWeights(counts.0.map(|x| {
            let x = x as f64;
            match method {
                WeightMethod::Complement => 1.0 - x / total,
                WeightMethod::InverseFreqSum => total / x,
                WeightMethod::InverseFreqMax => max / x,
            }
        })))
    }

    #[inline]
    pub fn get(&self, c: BehaviorClass) -> f64 {
        self.0[c.index()]
    }

    pub fn scaled(&self, k: f64) -> ClassWeights {
        ClassWeights(self.0.map(|w| w * k))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    /// Samples whose true-class probability was clamped to [`PROB_FLOOR`].
    pub clamped: usize,
}

/// `(1/N) * sum_n w[y_n] * -ln p_n[y_n]`.
pub fn weighted_ce_loss(probs: &Matrix, labels: &[BehaviorClass], weights: &ClassWeights) -> Result<LossValue, ModelError> {
    if probs.rows() != labels.len() {
        return Err(ModelError::LabelMismatch { rows: probs.rows(), labels: labels.len() });
    }
    let mut sum = 0.0;
    let mut clamped = 0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        let p = row[y.index()];
        let p = if p < PROB_FLOOR {
            clamped += 1;
            PROB_FLOOR
        } else {
            p
        };
        sum += weights.get(y) * -libm::log(p);
    }
    let loss = if labels.is_empty() { 0.0 } else { sum / labels.len() as f64 };
    Ok(LossValue { loss, clamped })
}

/// Plain mean negative log-likelihood.
pub fn cross_entropy(probs: &Matrix, labels: &[BehaviorClass]) -> f64 {
    let mut sum = 0.0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        sum += -libm::log(row[y.index()].max(PROB_FLOOR));
    }
    if labels.is_empty() {
        0.0
    } else {
        sum / labels.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// When a decay factor is applied to the learning rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum DecayMode {
    /// After every `patience / 2` consecutive epochs without improvement.
    #[default]
    Plateau,
    /// After every epoch.
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub decay_factor: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub decay_mode: DecayMode,
    pub batch_size: usize,
}

struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Adam => (vec![0.0; n], vec![0.0; n]),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer { kind, m, v, t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - libm::pow(ADAM_BETA1, self.t as f64);
                let c2 = 1.0 - libm::pow(ADAM_BETA2, self.t as f64);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= lr * mhat / (libm::sqrt(vhat) + ADAM_EPSILON);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings { max_epochs: 100, patience: 10, shuffle_seed: 0 }
    }
}

/// Features and labels of one split.
#[derive(Clone, Copy, Debug)]
pub struct Split<'a> {
    pub x: &'a Matrix,
    pub y: &'a [BehaviorClass],
}

impl<'a> Split<'a> {
    pub fn new(x: &'a Matrix, y: &'a [BehaviorClass]) -> Self {
        Split { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_uar: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation UAR.
    pub model: Mlp,
    pub best_epoch: usize,
    pub best_val_uar: f64,
    pub history: Vec<EpochRecord>,
}

/// Mini-batches for one epoch: a seeded permutation of `0..n` cut into
/// consecutive chunks. A pure function of its arguments.
pub fn epoch_batches(n: usize, batch_size: usize, shuffle_seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_at(shuffle_seed, &[epoch as u64]));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn validation_uar(model: &Mlp, val: Split<'_>) -> Result<f64, ModelError> {
    let pred = model.predict(val.x)?;
    let cm = ConfusionMatrix::from_pairs(val.y, &pred).map_err(|_| ModelError::LabelMismatch {
        rows: val.x.rows(),
        labels: val.y.len(),
    })?;
    cm.uar().map_err(|_| ModelError::EmptyValidation)
}

/// Mini-batch training with validation-UAR checkpoint selection and early
/// stopping after `patience` epochs without improvement.
pub fn train(
    mut model: Mlp,
    train: Split<'_>,
    val: Split<'_>,
    opt: &OptimizerConfig,
    weights: &ClassWeights,
    settings: &TrainSettings,
) -> Result<TrainOutcome, ModelError> {
    if train.x.rows() == 0 {
        return Err(ModelError::EmptyTrain);
    }
    if val.x.rows() == 0 {
        return Err(ModelError::EmptyValidation);
    }
    if opt.batch_size == 0 {
        return Err(ModelError::ZeroBatch);
    }
    for s in [train, val] {
        model.check_input(s.x)?;
        if s.x.rows() != s.y.len() {
            return Err(ModelError::LabelMismatch { rows: s.x.rows(), labels: s.y.len() });
        }
    }

    let n = train.x.rows();
    let mut optimizer = Optimizer::new(opt.kind, model.params.len());
    let mut lr = opt.learning_rate;
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    let decay_every = (settings.patience / 2).max(1);

    for epoch in 0..settings.max_epochs {
        let mut loss_sum = 0.0;
        for batch in epoch_batches(n, opt.batch_size, settings.shuffle_seed, epoch) {
            let xb = train.x.select_rows(&batch);
            let yb: Vec<BehaviorClass> = batch.iter().map(|&i| train.y[i]).collect();
            let acts = model.forward_all(&xb);
            let loss = weighted_ce_loss(acts.last().expect("output"), &yb, weights)?;
            loss_sum += loss.loss * batch.len() as f64;
            let grads = model.backward_from(&acts, &yb, weights);
            optimizer.step(&mut model.params, &grads.0, lr);
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::Diverged(epoch));
        }
        let val_uar = validation_uar(&model, val)?;
        history.push(EpochRecord { epoch, train_loss, val_uar, learning_rate: lr });

        if best.as_ref().is_none_or(|(_, b, _)| val_uar > *b) {
            best = Some((epoch, val_uar, model.params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= settings.patience {
            break;
        }
        if let Some(f) = opt.decay_factor {
            match opt.decay_mode {
                DecayMode::Plateau if stale > 0 && stale % decay_every == 0 => lr *= f,
                DecayMode::Plateau => {}
                DecayMode::Exponential => lr *= f,
            }
        }
    }

    let Some((best_epoch, best_val_uar, params)) = best else {
        // max_epochs == 0: the initial parameters are the only checkpoint
        let uar = validation_uar(&model, val)?;
        return Ok(TrainOutcome { model, best_epoch: 0, best_val_uar: uar, history });
    };
    model.params = params;
    Ok(TrainOutcome { model, best_epoch, best_val_uar, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorClass::*;

    #[test]
    fn param_counts() {
        assert_eq!(count_params(&MlpConfig::new(88, &[128, 64, 32], 0)), Ok(21827));
        assert_eq!(count_params(&MlpConfig::new(88, &[64, 32, 16], 0)), Ok(8355));
        assert_eq!(count_params(&MlpConfig::new(88, &[], 0)), Err(ModelError::NoHiddenLayers));
        assert_eq!(count_params(&MlpConfig::new(88, &[1, 2, 3, 4, 5], 0)), Err(ModelError::TooManyHiddenLayers(5)));
        assert_eq!(count_params(&MlpConfig::new(88, &[8, 0], 0)), Err(ModelError::ZeroWidth(1)));
        assert_eq!(MlpConfig::new(88, &[128, 64, 32], 0).halved().hidden, vec![64, 32, 16]);
        assert_eq!(halve_widths(&[300, 25, 1]), vec![150, 13, 1]);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(MlpConfig::new(5, &[4, 3], 7)).unwrap();
        let b = Mlp::init(MlpConfig::new(5, &[4, 3], 7)).unwrap();
        let c = Mlp::init(MlpConfig::new(5, &[4, 3], 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
        // biases start at zero, weights within the Glorot bound
        let (i, o, w, bias) = a.layer(0);
        let limit = (6.0 / (i + o) as f64).sqrt();
        assert!(w.iter().all(|v| v.abs() <= limit));
        assert!(bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let mut m = Mlp::init(MlpConfig::new(3, &[4], 1)).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]], 3);
        let p = m.forward(&x).unwrap();
        for row in p.iter_rows() {
            for &v in row {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hand_sized_forward() {
        // 2 -> 2 (ReLU) -> 3
        let cfg = MlpConfig::new(2, &[2], 0);
        let params = vec![
            1.0, -1.0, // hidden 0
            0.5, 2.0, // hidden 1
            0.1, -0.2, // hidden bias
            1.0, 0.0, // out 0
            0.0, 1.0, // out 1
            -1.0, 1.0, // out 2
            0.0, 0.5, -0.5, // out bias
        ];
        let m = Mlp::from_params(cfg, params).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0]], 2);
        // hidden: relu(1-2+0.1)=0, relu(0.5+4-0.2)=4.3
        // logits: 0, 4.8, 3.8
        let z = [0.0f64, 4.8, 3.8];
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let p = m.forward(&x).unwrap();
        for k in 0..3 {
            assert!((p.get(0, k) - z[k].exp() / denom).abs() < 1e-9);
        }
        assert_eq!(m.predict(&x).unwrap(), vec![Constructive]);
    }

    #[test]
    fn forward_checks_dimension() {
        let m = Mlp::init(MlpConfig::new(3, &[2], 0)).unwrap();
        assert_eq!(
            m.forward(&Matrix::zeros(1, 4)),
            Err(ModelError::Dimension { expected: 3, got: 4 })
        );
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_class(&[0.4, 0.4, 0.2]), Hostile);
        assert_eq!(argmax_class(&[0.2, 0.4, 0.4]), Constructive);
    }

    #[test]
    fn loss_examples() {
        let onehot = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 3);
        let l = weighted_ce_loss(&onehot, &[Hostile, Positive], &ClassWeights::UNIT).unwrap();
        assert_eq!(l.loss, 0.0);

        let p = Matrix::from_rows(&[[0.5, 0.3, 0.2]], 3);
        let w = ClassWeights([76.4205, 1.0, 9.8247]);
        let l = weighted_ce_loss(&p, &[Hostile], &w).unwrap();
        assert!((l.loss - 76.4205 * core::f64::consts::LN_2).abs() < 1e-12);

        let zero = Matrix::from_rows(&[[0.0, 1.0, 0.0]], 3);
        let l = weighted_ce_loss(&zero, &[Hostile], &ClassWeights::UNIT).unwrap();
        assert_eq!(l.clamped, 1);
        assert!((l.loss - -PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn class_weight_methods() {
        let counts = ClassCounts::new(176, 13450, 1369);
        let max = ClassWeights::from_counts(WeightMethod::InverseFreqMax, &counts).unwrap();
        assert!((max.get(Constructive) - 1.0).abs() < 1e-12);
        let comp = ClassWeights::from_counts(WeightMethod::Complement, &counts).unwrap();
        assert!((comp.0.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(
            ClassWeights::from_counts(WeightMethod::InverseFreqSum, &ClassCounts::new(0, 3, 1)),
            Err(ModelError::EmptyClass(Hostile))
        );
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        // saturate the output so probabilities are one-hot in f64
        let cfg = MlpConfig::new(1, &[1], 0);
        let params = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1000.0];
        let m = Mlp::from_params(cfg, params).unwrap();
        let x = Matrix::from_rows(&[[1.0]], 1);
        let g = m.backward(&x, &[Positive], &ClassWeights::UNIT).unwrap();
        assert!(g.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_scale_with_weights() {
        let m = Mlp::init(MlpConfig::new(3, &[4], 2)).unwrap();
        let x = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.0, 0.0, -0.5]], 3);
        let y = [Hostile, Positive];
        let w = ClassWeights([2.0, 1.0, 3.0]);
        let g1 = m.backward(&x, &y, &w).unwrap();
        let g4 = m.backward(&x, &y, &w.scaled(4.0)).unwrap();
        for (a, b) in g1.0.iter().zip(&g4.0) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn batches_are_a_function_of_epoch_and_seed() {
        assert_eq!(epoch_batches(10, 3, 5, 2), epoch_batches(10, 3, 5, 2));
        assert_ne!(epoch_batches(10, 3, 5, 2), epoch_batches(10, 3, 5, 3));
        let b = epoch_batches(10, 3, 5, 0);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [3, 3, 3, 1]);
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn train_rejects_empty_sets() {
        let m = Mlp::init(MlpConfig::new(2, &[2], 0)).unwrap();
        let x = Matrix::from_rows(&[[0.0, 1.0]], 2);
        let empty = Matrix::zeros(0, 2);
        let opt = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            decay_factor: None,
            decay_mode: DecayMode::Plateau,
            batch_size: 4,
        };
        let s = TrainSettings::default();
        let r = train(m.clone(), Split::new(&empty, &[]), Split::new(&x, &[Hostile]), &opt, &ClassWeights::UNIT, &s);
        assert_eq!(r.unwrap_err(), ModelError::EmptyTrain);
        let r = train(m, Split::new(&x, &[Hostile]), Split::new(&empty, &[]), &opt, &ClassWeights::UNIT, &s);
        assert_eq!(r.unwrap_err(), ModelError::EmptyValidation);
    }
}
