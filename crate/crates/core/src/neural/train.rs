use std::time::Instant;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::data::{build_training_windows, build_windows, SequenceSet};
use super::{backward, forward_batch, Activation, Architecture, ModelParams, Weights, GATES};
use crate::error::{Error, Result};
use crate::model::{ChannelDataset, CtfRecord, FrequencyGrid};
use crate::rng::{self, StreamRng};

/// Rows evaluated per forward call when no gradient is needed.
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub window_len: usize,
    pub rng_seed: u64,
    pub gradient_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 94,
            batch_size: 20,
            shuffle: false,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            window_len: 32,
            rng_seed: 0x5EED_0094,
            gradient_clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    /// `epochs = 0` is accepted and yields the initialized model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.window_len == 0 {
            return bad("window_len must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0 && self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.gradient_clip_norm > 0.0) {
            return bad("gradient_clip_norm must be positive (use inf to disable)");
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            clip_norm: self.gradient_clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_train: Vec<f64>,
    pub loss_test: Vec<f64>,
    /// Excluded from equality-sensitive artifacts.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.loss_train.len()
    }
}

fn fill_uniform(rng: &mut StreamRng, rows: &mut [f64], limit: f64) {
    for v in rows {
        *v = rng::uniform_in(rng, -limit, limit);
    }
}

fn init_layer(rng: &mut StreamRng, p: &mut super::LstmLayerParams) {
    let h = p.hidden();
    let i = p.input_size();
    let w_limit = (6.0 / (i + h) as f64).sqrt();
    let u_limit = (6.0 / (2 * h) as f64).sqrt();
    for v in p.w.iter_mut() {
        *v = rng::uniform_in(rng, -w_limit, w_limit);
    }
    for v in p.u.iter_mut() {
        *v = rng::uniform_in(rng, -u_limit, u_limit);
    }
    p.b.fill(0.0);
    let forget = GATES.iter().position(|g| *g == "forget").expect("forget gate");
    p.b.slice_mut(ndarray::s![forget * h..(forget + 1) * h]).fill(1.0);
}

/// Deterministic initialization: every gate block of W and U uniform in
/// `±sqrt(6 / (fan_in + fan_out))`, drawn in the order layer1 W, layer1 U,
/// layer2 W, layer2 U, dense W; biases zero except the forget gates at 1.
/// Returns the generator so the same stream can drive shuffling.
pub fn init_weights(arch: &Architecture, seed: u64) -> (Weights, StreamRng) {
    let mut rng = rng::stream(seed);
    let mut w = Weights::zeros(arch);
    init_layer(&mut rng, &mut w.layer1);
    init_layer(&mut rng, &mut w.layer2);
    let d_limit = (6.0 / (arch.layer2 + 1) as f64).sqrt();
    fill_uniform(&mut rng, w.dense_w.as_slice_mut().expect("contiguous"), d_limit);
    (w, rng)
}

/// Standardized predictions for every sample of `set`, in sample order.
fn predict_set(weights: &Weights, activation: Activation, set: &SequenceSet) -> Array1<f64> {
    let mut out = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (xs, _) = set.batch(chunk);
        out.extend(forward_batch(weights, activation, &xs));
    }
    Array1::from(out)
}

/// Mean squared error over every sample of `set` (standardized units).
pub fn evaluate_loss(weights: &Weights, activation: Activation, set: &SequenceSet) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let y = predict_set(weights, activation, set);
    let sse: f64 = y.iter().enumerate().map(|(i, v)| (v - set.target(i)).powi(2)).sum();
    sse / set.len() as f64
}

fn shuffle(rng: &mut StreamRng, order: &mut [usize]) {
    for i in (1..order.len()).rev() {
        let j = (rng::uniform(rng) * (i + 1) as f64) as usize;
        order.swap(i, j.min(i));
    }
}

/// Trains on the dataset's train split, scoring the test split after every
/// epoch.
pub fn train(dataset: &ChannelDataset, arch: &Architecture, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    arch.validate()?;
    config.validate()?;
    if dataset.train_distances_m().is_empty() || dataset.test_distances_m().is_empty() {
        return Err(Error::Validation("training needs at least one train and one test record".into()));
    }
    let start = Instant::now();
    let (norm, train_set) = build_training_windows(dataset, config.window_len)?;
    let test_set = build_windows(&dataset.test_records(), &norm, config.window_len)?;
    let (mut weights, mut rng) = init_weights(arch, config.rng_seed);
    let mut state = AdamState::new(&weights);
    let hyper = config.hyper();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        loss_train: Vec::with_capacity(config.epochs),
        loss_test: Vec::with_capacity(config.epochs),
        wall_time_s: 0.0,
    };

    for epoch in 1..=config.epochs {
        if config.shuffle {
            shuffle(&mut rng, &mut order);
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (xs, targets) = train_set.batch(chunk);
            let (loss, mut grads) = backward(&weights, arch.activation, &xs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1, loss });
            }
            adam_step(&mut weights, &mut grads, &mut state, &hyper);
            total += loss;
            batches += 1;
        }
        let test_loss = evaluate_loss(&weights, arch.activation, &test_set);
        if !test_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0, loss: test_loss });
        }
        report.loss_train.push(total / batches as f64);
        report.loss_test.push(test_loss);
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    let model = ModelParams {
        activation: arch.activation,
        window_len: config.window_len,
        norm,
        weights,
    };
    Ok((model, report))
}

/// Predicted magnitude response (dB) at `distance_m` over `grid`.
pub fn predict_ctf(model: &ModelParams, distance_m: f64, grid: &FrequencyGrid) -> Result<CtfRecord> {
    model.norm.check_grid(grid)?;
    model.weights.validate()?;
    let set = SequenceSet::query(&model.norm, distance_m, grid, model.window_len)?;
    let z = predict_set(&model.weights, model.activation, &set);
    let gain: Vec<f64> = z.iter().map(|v| model.norm.destandardize(*v)).collect();
    CtfRecord::new(distance_m, *grid, gain)
}
