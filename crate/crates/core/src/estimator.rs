//! The shape estimator: a small fully connected network mapping the nine
//! normalized capacitance readouts to the ten marker coordinates, trained
//! by mini-batch Adam on mean squared error.
//!
//! Everything here is deliberately self-contained and single-threaded so
//! that a fixed seed reproduces the loss trajectory bit for bit.

use crate::error::{Error, Result};
use crate::geometry::{MarkerSet, PlanarPoint};
use crate::ingestion::{Dataset, ScalingMeta, TrainingPair};
use crate::sensing::{CapacitanceFrame, FrameKind, CHANNELS};
use crate::seeds::{shuffle, uniform_symmetric};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Layer widths of the canonical estimator: 9 readouts in, three hidden
/// layers, 10 coordinates out.
pub const CANONICAL_SIZES: [usize; 5] = [9, 32, 128, 32, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One fully connected layer; weights are row-major `(outputs x inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Attached by training; required to map outputs back to mm.
    pub scaling: Option<ScalingMeta>,
    /// Seed the parameters were initialized from.
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the per-epoch shuffle.
    pub seed: u64,
    /// Stop after this many epochs without validation improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 5_000,
            batch_size: 256,
            seed: 0,
            early_stop_patience: Some(500),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_val_loss: f64,
    pub best_epoch: usize,
}

/// Per-layer parameter gradients, same shapes as the layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

/// Initialize a model with uniform weights scaled by fan-in + fan-out
/// and zero biases. Deterministic per seed.
pub fn mlp_init(sizes: &[usize], seed: u64) -> Result<MlpModel> {
    if sizes.len() < 2 {
        return Err(Error::InvalidSizes(format!(
            "need at least input and output sizes, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidSizes(format!("zero-width layer in {sizes:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (k, pair) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| uniform_symmetric(&mut rng, bound))
            .collect();
        layers.push(Layer {
            inputs: fan_in,
            outputs: fan_out,
            weights,
            biases: vec![0.0; fan_out],
            activation: if k + 1 == sizes.len() - 1 {
                Activation::Linear
            } else {
                Activation::Relu
            },
        });
    }
    Ok(MlpModel {
        sizes: sizes.to_vec(),
        layers,
        scaling: None,
        seed,
    })
}

impl MlpModel {
    /// Total number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("validated non-empty")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: MlpModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        for l in &model.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::InvalidSizes("layer shape mismatch in model file".into()));
            }
        }
        Ok(model)
    }
}

/// Forward pass. Errors on wrong input width or non-finite input.
pub fn forward(model: &MlpModel, input: &[f64]) -> Result<Vec<f64>> {
    if input.len() != model.input_size() {
        return Err(Error::InvalidSizes(format!(
            "expected {} inputs, got {}",
            model.input_size(),
            input.len()
        )));
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("estimator input".into()));
    }
    let mut current = input.to_vec();
    let mut next = Vec::new();
    for layer in &model.layers {
        next.clear();
        next.reserve(layer.outputs);
        for o in 0..layer.outputs {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            let z: f64 = layer.biases[o]
                + row.iter().zip(current.iter()).map(|(w, x)| w * x).sum::<f64>();
            next.push(layer.activation.apply(z));
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

/// Mean of squared componentwise errors.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::InvalidSizes(format!(
            "loss needs equal non-empty lengths, got {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Backpropagation over a batch: gradients of the batch-mean MSE for every
/// parameter, plus the loss itself.
pub fn backward(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[&[f64]],
) -> Result<(Gradients, f64)> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::InvalidSizes("batch inputs/targets mismatch".into()));
    }
    backward_impl(model, inputs.iter().copied().zip(targets.iter().copied()), inputs.len())
}

fn backward_impl<'a>(
    model: &MlpModel,
    samples: impl Iterator<Item = (&'a [f64], &'a [f64])>,
    batch_len: usize,
) -> Result<(Gradients, f64)> {
    let n_layers = model.layers.len();
    let out_size = model.output_size();
    let mut grads = Gradients::zeros(model);
    let mut loss_sum = 0.0;

    // Reused per-sample buffers: post-activations per layer (index 0 is
    // the input) and pre-activations per layer.
    let mut acts: Vec<Vec<f64>> = std::iter::once(vec![0.0; model.input_size()])
        .chain(model.layers.iter().map(|l| vec![0.0; l.outputs]))
        .collect();
    let mut zs: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
    let mut delta = vec![0.0; out_size];
    let mut delta_prev: Vec<f64> = Vec::new();

    let inv = 1.0 / (out_size as f64 * batch_len as f64);
    let mut seen = 0usize;
    for (input, target) in samples {
        seen += 1;
        if input.len() != model.input_size() || target.len() != out_size {
            return Err(Error::InvalidSizes("sample width mismatch".into()));
        }
        acts[0].copy_from_slice(input);
        for (k, layer) in model.layers.iter().enumerate() {
            let (before, after) = acts.split_at_mut(k + 1);
            let a_in = &before[k];
            let a_out = &mut after[0];
            let z_out = &mut zs[k];
            for o in 0..layer.outputs {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let z: f64 = layer.biases[o]
                    + row.iter().zip(a_in.iter()).map(|(w, x)| w * x).sum::<f64>();
                z_out[o] = z;
                a_out[o] = layer.activation.apply(z);
            }
        }

        let pred = &acts[n_layers];
        delta.clear();
        delta.resize(out_size, 0.0);
        for (o, (&p, &t)) in pred.iter().zip(target.iter()).enumerate() {
            let e = p - t;
            loss_sum += e * e;
            // dL/dz at the linear output layer, batch mean folded in.
            delta[o] = 2.0 * e * inv * model.layers[n_layers - 1].activation.derivative(zs[n_layers - 1][o]);
        }

        for k in (0..n_layers).rev() {
            let layer = &model.layers[k];
            let a_in = &acts[k];
            let gw = &mut grads.weights[k];
            let gb = &mut grads.biases[k];
            for o in 0..layer.outputs {
                let d = delta[o];
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, x) in row.iter_mut().zip(a_in.iter()) {
                    *g += d * x;
                }
            }
            if k > 0 {
                delta_prev.clear();
                delta_prev.resize(layer.inputs, 0.0);
                for o in 0..layer.outputs {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (dp, w) in delta_prev.iter_mut().zip(row.iter()) {
                        *dp += d * w;
                    }
                }
                let prev = &model.layers[k - 1];
                for (dp, &z) in delta_prev.iter_mut().zip(zs[k - 1].iter()) {
                    *dp *= prev.activation.derivative(z);
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }
    debug_assert_eq!(seen, batch_len);
    Ok((grads, loss_sum / (out_size * batch_len) as f64))
}

/// Mean MSE of the model over the indexed subset of pairs.
pub fn dataset_loss(model: &MlpModel, pairs: &[TrainingPair], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::InvalidSizes("empty evaluation split".into()));
    }
    let mut sum = 0.0;
    for &i in idx {
        let pred = forward(model, &pairs[i].input)?;
        sum += loss_mse(&pred, &pairs[i].target)?;
    }
    Ok(sum / idx.len() as f64)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    lr: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpModel, lr: f64) -> Self {
        let shapes: Vec<usize> = model
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.biases.len()])
            .collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (k, layer) in model.layers.iter_mut().enumerate() {
            let slots = [
                (&mut layer.weights, &grads.weights[k], 2 * k),
                (&mut layer.biases, &grads.biases[k], 2 * k + 1),
            ];
            for (params, grad, slot) in slots {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    params[i] -= self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mini-batch Adam training. Returns the model at the epoch of minimum
/// validation loss together with the full per-epoch report.
pub fn train(
    model: &MlpModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if dataset.train_idx.is_empty() || dataset.val_idx.is_empty() {
        return Err(Error::InvalidSizes(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let mut current = model.clone();
    current.scaling = Some(dataset.scaling.clone());

    let mut best = current.clone();
    let mut best_val = dataset_loss(&current, &dataset.pairs, &dataset.val_idx)?;
    let mut best_epoch = 0usize;
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        best_val_loss: best_val,
        best_epoch: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = dataset.train_idx.clone();
    let mut adam = Adam::new(&current, config.learning_rate);
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        shuffle(&mut rng, &mut order);
        let mut loss_weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (grads, loss) = backward_impl(
                &current,
                chunk.iter().map(|&i| {
                    let p = &dataset.pairs[i];
                    (p.input.as_slice(), p.target.as_slice())
                }),
                chunk.len(),
            )?;
            adam.update(&mut current, &grads);
            loss_weighted += loss * chunk.len() as f64;
        }
        let train_loss = loss_weighted / order.len() as f64;
        let val_loss = dataset_loss(&current, &dataset.pairs, &dataset.val_idx)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("loss not finite (train {train_loss}, val {val_loss})"),
            });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best = current.clone();
            stale = 0;
        } else {
            stale += 1;
            if let Some(patience) = config.early_stop_patience {
                if stale >= patience {
                    break;
                }
            }
        }
    }
    report.best_val_loss = best_val;
    report.best_epoch = best_epoch;
    Ok((best, report))
}

/// Decode a normalized frame into marker positions in mm using the
/// scaling stored with the model.
pub fn estimate_markers(model: &MlpModel, frame: &CapacitanceFrame) -> Result<MarkerSet> {
    if frame.kind != FrameKind::Normalized {
        return Err(Error::FrameKind {
            expected: "normalized",
            got: "raw",
        });
    }
    if model.input_size() != CHANNELS || model.output_size() != 10 {
        return Err(Error::InvalidSizes(format!(
            "estimator must map {CHANNELS} channels to 10 coordinates, got {:?}",
            model.sizes
        )));
    }
    let scaling = model
        .scaling
        .as_ref()
        .ok_or_else(|| Error::Calibration("model has no scaling metadata; train it first".into()))?;
    let out = forward(model, &frame.values)?;
    let mut points = [PlanarPoint::new(0.0, 0.0); 5];
    for (k, point) in points.iter_mut().enumerate() {
        *point = PlanarPoint::new(out[2 * k] * scaling.chord_mm, out[2 * k + 1] * scaling.chord_mm);
    }
    Ok(MarkerSet::new(frame.t, points))
}
