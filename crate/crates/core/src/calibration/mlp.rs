//! Fully connected ReLU regressor for per-subgraph threshold prediction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSample;
use super::features::{PredictorFeatures, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::seeding;

/// Input, hidden and output widths of the predictor.
pub const LAYER_DIMS: [usize; 4] = [FEATURE_DIM, 128, 32, 1];

const MODEL_FORMAT_VERSION: u32 = 1;

/// Weights are row-major `[out][in]` per layer. Inputs and the target are
/// standardized with the stored statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPredictor {
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Per-layer gradients, same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpPredictor {
    /// All-zero parameters with identity standardization.
    pub fn zeros(layer_dims: &[usize]) -> Self {
        let layers = layer_dims.len() - 1;
        Self {
            version: MODEL_FORMAT_VERSION,
            layer_dims: layer_dims.to_vec(),
            input_mean: vec![0.0; layer_dims[0]],
            input_std: vec![1.0; layer_dims[0]],
            target_mean: 0.0,
            target_std: 1.0,
            weights: (0..layers)
                .map(|l| vec![0.0; layer_dims[l] * layer_dims[l + 1]])
                .collect(),
            biases: (0..layers).map(|l| vec![0.0; layer_dims[l + 1]]).collect(),
        }
    }

    /// Weights uniform in `±1/√fan_in`, zero biases.
    pub fn random<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Self {
        let mut model = Self::zeros(layer_dims);
        for (l, w) in model.weights.iter_mut().enumerate() {
            let bound = 1.0 / (layer_dims[l] as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
        }
        model
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    // Pre-activations and activations of every layer; `acts[0]` is the input.
    fn forward_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.layers();
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(layers);
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.weights[l];
            let x = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    self.biases[l][o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let a = if l + 1 < layers {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    /// Network output in standardized target units for a standardized input.
    pub fn forward_standardized(&self, input: &[f64]) -> f64 {
        self.forward_trace(input).1.last().expect("at least one layer")[0]
    }

    /// Raw prediction in target units (not clamped).
    pub fn predict_raw(&self, features: &[f64]) -> f64 {
        let z = self.standardize(features);
        self.forward_standardized(&z) * self.target_std + self.target_mean
    }

    /// Mean squared error and its gradient over standardized `(input, target)` pairs.
    pub fn loss_and_gradients(&self, batch: &[(&[f64], f64)]) -> (f64, Gradients) {
        let layers = self.layers();
        let mut grads = Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &(x, y) in batch {
            let (pre, acts) = self.forward_trace(x);
            let err = acts[layers][0] - y;
            loss += err * err * scale;
            let mut delta = vec![2.0 * err * scale];
            for l in (0..layers).rev() {
                let n_in = self.layer_dims[l];
                let input = &acts[l];
                for (o, d) in delta.iter().enumerate() {
                    grads.biases[l][o] += d;
                    let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..n_in)
                        .map(|i| {
                            if pre[l - 1][i] <= 0.0 {
                                return 0.0;
                            }
                            delta
                                .iter()
                                .enumerate()
                                .map(|(o, d)| d * w[o * n_in + i])
                                .sum()
                        })
                        .collect();
                }
            }
        }
        (loss, grads)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!("unsupported model version {}", self.version)));
        }
        let dims = &self.layer_dims;
        if dims.len() < 2 || *dims.last().unwrap() != 1 {
            return Err(Error::Schema("model must end in a single output".into()));
        }
        let layers = dims.len() - 1;
        if self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::Schema("layer count mismatch".into()));
        }
        for l in 0..layers {
            if self.weights[l].len() != dims[l] * dims[l + 1] || self.biases[l].len() != dims[l + 1] {
                return Err(Error::Schema(format!("layer {l} has wrong shape")));
            }
        }
        if self.input_mean.len() != dims[0] || self.input_std.len() != dims[0] {
            return Err(Error::Schema("standardization size mismatch".into()));
        }
        let all_finite = self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .chain(&self.input_mean)
            .chain(&self.input_std)
            .chain([&self.target_mean, &self.target_std])
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Schema("model has non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Predicted 99.7-percentile threshold, clamped below at zero.
pub fn predict_threshold(model: &MlpPredictor, features: &PredictorFeatures) -> Result<f64> {
    if model.input_dim() != features.as_slice().len() {
        return Err(Error::Contract(format!(
            "model expects {} features, got {}",
            model.input_dim(),
            features.as_slice().len()
        )));
    }
    Ok(model.predict_raw(features.as_slice()).max(0.0))
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Mini-batch SGD with momentum on mean squared error of standardized targets.
/// Single-threaded, so a fixed seed reproduces the weights bit for bit.
pub fn train_predictor(dataset: &[TrainingSample], config: &TrainingConfig) -> Result<MlpPredictor> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
    }
    let mut rng = seeding::stream(config.seed, seeding::DOMAIN_TRAINING, &[]);
    let mut model = MlpPredictor::random(&LAYER_DIMS, &mut rng);

    for f in 0..FEATURE_DIM {
        let (m, s) = mean_std(dataset.iter().map(|d| d.features.as_slice()[f]));
        model.input_mean[f] = m;
        model.input_std[f] = s;
    }
    let (tm, ts) = mean_std(dataset.iter().map(|d| d.target));
    model.target_mean = tm;
    model.target_std = ts;

    let inputs: Vec<Vec<f64>> = dataset
        .iter()
        .map(|d| model.standardize(d.features.as_slice()))
        .collect();
    let targets: Vec<f64> = dataset.iter().map(|d| (d.target - tm) / ts).collect();

    let mut vel_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| (inputs[i].as_slice(), targets[i]))
                .collect();
            let (loss, grads) = model.loss_and_gradients(&batch);
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {epoch}; lower the learning rate"
                )));
            }
            for l in 0..model.weights.len() {
                for (p, (v, g)) in model.weights[l]
                    .iter_mut()
                    .zip(vel_w[l].iter_mut().zip(&grads.weights[l]))
                {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
                for (p, (v, g)) in model.biases[l]
                    .iter_mut()
                    .zip(vel_b[l].iter_mut().zip(&grads.biases[l]))
                {
                    *v = config.momentum * *v - config.learning_rate * g;
                    *p += *v;
                }
            }
        }
    }
    Ok(model)
}
