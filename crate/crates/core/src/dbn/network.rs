use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::rbm::{sigmoid, RbmLayer};
use super::{DbnError, TrainConfig};
use crate::data::RampLabel;

pub const N_CLASSES: usize = 3;

/// Stack of RBMs used as sigmoid hidden layers, topped by a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<RbmLayer>,
    /// Classes × last hidden width.
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

/// Address of a single trainable scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Weight { layer: usize, row: usize, col: usize },
    HiddenBias { layer: usize, unit: usize },
    HeadWeight { row: usize, col: usize },
    HeadBias { class: usize },
}

/// Gradients of the mean cross-entropy, laid out like [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub head_weights: Array2<f64>,
    pub head_bias: Array1<f64>,
}

impl Gradients {
    pub fn get(&self, param: ParamRef) -> f64 {
        match param {
            ParamRef::Weight { layer, row, col } => self.layers[layer].0[[row, col]],
            ParamRef::HiddenBias { layer, unit } => self.layers[layer].1[unit],
            ParamRef::HeadWeight { row, col } => self.head_weights[[row, col]],
            ParamRef::HeadBias { class } => self.head_bias[class],
        }
    }
}

/// Softmax of each row, shifted by the row maximum.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Label from class scores; an exact tie with the no-ramp class resolves to
/// no-ramp.
pub fn label_from_scores(scores: &[f64]) -> RampLabel {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores[RampLabel::Flat.class_index()] >= max {
        return RampLabel::Flat;
    }
    let idx = scores.iter().position(|&s| s >= max).unwrap_or(1);
    RampLabel::from_class_index(idx).unwrap_or(RampLabel::Flat)
}

impl Network {
    /// `input → hidden[0] → ... → hidden[last] → 3 classes`.
    pub fn new<R: Rng>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = input;
        for &h in hidden {
            layers.push(RbmLayer::new(width, h, rng));
            width = h;
        }
        let head_weights = Array2::from_shape_fn((N_CLASSES, width), |_| rng.random_range(-0.01..0.01));
        Self {
            layers,
            head_weights,
            head_bias: Array1::zeros(N_CLASSES),
        }
    }

    pub fn input_len(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head_weights.ncols(), RbmLayer::visible_len)
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(RbmLayer::hidden_len).collect()
    }

    pub fn param_mut(&mut self, param: ParamRef) -> &mut f64 {
        match param {
            ParamRef::Weight { layer, row, col } => &mut self.layers[layer].weights[[row, col]],
            ParamRef::HiddenBias { layer, unit } => &mut self.layers[layer].hidden_bias[unit],
            ParamRef::HeadWeight { row, col } => &mut self.head_weights[[row, col]],
            ParamRef::HeadBias { class } => &mut self.head_bias[class],
        }
    }

    /// Every trainable scalar, in a fixed order.
    pub fn all_params(&self) -> Vec<ParamRef> {
        let mut out = Vec::new();
        for (layer, rbm) in self.layers.iter().enumerate() {
            let (rows, cols) = rbm.weights.dim();
            for row in 0..rows {
                for col in 0..cols {
                    out.push(ParamRef::Weight { layer, row, col });
                }
                out.push(ParamRef::HiddenBias { layer, unit: row });
            }
        }
        let (rows, cols) = self.head_weights.dim();
        for row in 0..rows {
            for col in 0..cols {
                out.push(ParamRef::HeadWeight { row, col });
            }
            out.push(ParamRef::HeadBias { class: row });
        }
        out
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<(), DbnError> {
        if x.ncols() != self.input_len() {
            return Err(DbnError::Shape {
                expected: self.input_len(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first, logits last.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for rbm in &self.layers {
            let prev = acts.last().expect("input pushed");
            let next = (prev.dot(&rbm.weights.t()) + &rbm.hidden_bias).mapv(sigmoid);
            acts.push(next);
        }
        let top = acts.last().expect("input pushed");
        let logits = top.dot(&self.head_weights.t()) + &self.head_bias;
        (acts, logits)
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, DbnError> {
        self.check_input(x)?;
        Ok(self.forward(x).1)
    }

    /// Class probabilities, one row per input row, in `[down, none, up]` order.
    pub fn class_scores(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, DbnError> {
        Ok(softmax_rows(&self.logits(x)?))
    }

    /// Mean softmax cross-entropy of the batch.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[RampLabel]) -> Result<f64, DbnError> {
        let logits = self.logits(x)?;
        Ok(cross_entropy(&logits, labels))
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[RampLabel],
    ) -> Result<(f64, Gradients), DbnError> {
        self.check_input(x)?;
        if x.nrows() != labels.len() || labels.is_empty() {
            return Err(DbnError::Shape {
                expected: x.nrows(),
                found: labels.len(),
            });
        }
        let n = x.nrows() as f64;
        let (acts, logits) = self.forward(x);
        let loss = cross_entropy(&logits, labels);

        let mut delta = softmax_rows(&logits);
        for (mut row, label) in delta.rows_mut().into_iter().zip(labels) {
            row[label.class_index()] -= 1.0;
        }
        delta /= n;

        let top = acts.last().expect("input pushed");
        let head_weights = delta.t().dot(top);
        let head_bias = delta.sum_axis(Axis(0));

        let mut layers = Vec::with_capacity(self.layers.len());
        let mut upstream = delta.dot(&self.head_weights);
        for (l, rbm) in self.layers.iter().enumerate().rev() {
            let out = &acts[l + 1];
            let local = &upstream * &out.mapv(|a| a * (1.0 - a));
            layers.push((local.t().dot(&acts[l]), local.sum_axis(Axis(0))));
            upstream = local.dot(&rbm.weights);
        }
        layers.reverse();

        Ok((
            loss,
            Gradients {
                layers,
                head_weights,
                head_bias,
            },
        ))
    }

    fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (rbm, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            rbm.weights.scaled_add(-lr, gw);
            rbm.hidden_bias.scaled_add(-lr, gb);
        }
        self.head_weights.scaled_add(-lr, &grads.head_weights);
        self.head_bias.scaled_add(-lr, &grads.head_bias);
    }

    /// Greedy layer-wise CD-1 training. Each layer is trained on the hidden
    /// probabilities of the layer below. Returns mean reconstruction error
    /// per epoch for each layer.
    pub fn pretrain<R: Rng>(
        &mut self,
        features: ArrayView2<'_, f64>,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>, DbnError> {
        self.check_input(features)?;
        if features.nrows() == 0 {
            return Err(DbnError::EmptyTrainingSet);
        }
        let mut input = features.to_owned();
        let mut curves = Vec::with_capacity(self.layers.len());
        let mut order: Vec<usize> = (0..input.nrows()).collect();
        for rbm in &mut self.layers {
            let mut curve = Vec::with_capacity(config.pretrain_epochs);
            for _ in 0..config.pretrain_epochs {
                order.shuffle(rng);
                let mut total = 0.0;
                let mut batches = 0usize;
                for chunk in order.chunks(config.batch_size) {
                    let batch = input.select(Axis(0), chunk);
                    total += rbm.cd1_update(batch.view(), config, rng)?;
                    batches += 1;
                }
                curve.push(total / batches as f64);
            }
            input = rbm.hidden_prob_batch(input.view())?;
            curves.push(curve);
        }
        Ok(curves)
    }

    /// Supervised mini-batch gradient descent on the whole stack for
    /// `finetune_max_iters` epochs. Returns the mean training loss per epoch.
    pub fn finetune<R: Rng>(
        &mut self,
        features: ArrayView2<'_, f64>,
        labels: &[RampLabel],
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>, DbnError> {
        self.check_input(features)?;
        if features.nrows() != labels.len() {
            return Err(DbnError::Shape {
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(DbnError::EmptyTrainingSet);
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let mut curve = Vec::with_capacity(config.finetune_max_iters);
        for epoch in 0..config.finetune_max_iters {
            order.shuffle(rng);
            let mut weighted = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch = features.select(Axis(0), chunk);
                let batch_labels: Vec<RampLabel> = chunk.iter().map(|&i| labels[i]).collect();
                let (loss, grads) = self.loss_and_gradients(batch.view(), &batch_labels)?;
                if !loss.is_finite() {
                    return Err(DbnError::NonFiniteLoss { epoch });
                }
                weighted += loss * chunk.len() as f64;
                self.apply_gradients(&grads, config.finetune_learning_rate);
            }
            curve.push(weighted / labels.len() as f64);
        }
        Ok(curve)
    }
}

fn cross_entropy(logits: &Array2<f64>, labels: &[RampLabel]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, label)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            lse - row[label.class_index()]
        })
        .sum();
    total / labels.len() as f64
}
