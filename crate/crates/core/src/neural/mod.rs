//! Two-layer LSTM regressor mapping a window of (frequency, distance) inputs
//! to the standardized channel gain at the window's last frequency.
//!
//! Layer 1 returns its full hidden sequence, layer 2 only its final state,
//! and a one-unit dense head produces the scalar output. Gradients are
//! derived by hand for exactly this wiring.

mod adam;
mod data;
mod format;
mod layer;
mod train;

pub use adam::{adam_step, clip_global_norm, AdamHyper, AdamState};
pub use data::{build_training_windows, build_windows, Normalization, SequenceSet};
pub use format::{read_model, write_model, MODEL_FORMAT_VERSION};
pub use layer::{sigmoid, Activation, LstmLayerParams, GATES};
pub use train::{evaluate_loss, init_weights, predict_ctf, train, TrainConfig, TrainReport};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use layer::{backward_sequence, forward_sequence, Upstream};

/// Features per time step: normalized frequency and normalized distance.
pub const INPUT_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub layer1: usize,
    pub layer2: usize,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            layer1: 100,
            layer2: 9,
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn new(layer1: usize, layer2: usize) -> Self {
        Architecture {
            layer1,
            layer2,
            ..Architecture::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer1 == 0 || self.layer2 == 0 {
            return Err(Error::Validation("LSTM layer sizes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// Dense head weights, one per layer-2 unit.
    pub dense_w: Array1<f64>,
    /// Dense head bias (one entry).
    pub dense_b: Array1<f64>,
}

impl Weights {
    pub fn zeros(arch: &Architecture) -> Self {
        Weights {
            layer1: LstmLayerParams::zeros(INPUT_SIZE, arch.layer1),
            layer2: LstmLayerParams::zeros(arch.layer1, arch.layer2),
            dense_w: Array1::zeros(arch.layer2),
            dense_b: Array1::zeros(1),
        }
    }

    pub fn tensor_names() -> [&'static str; 8] {
        [
            "layer1.W", "layer1.U", "layer1.b", "layer2.W", "layer2.U", "layer2.b", "dense.W",
            "dense.b",
        ]
    }

    /// Flat views of all tensors, in [`Weights::tensor_names`] order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        fn flat(a: Option<&[f64]>) -> &[f64] {
            a.expect("parameter tensors are contiguous")
        }
        [
            flat(self.layer1.w.as_slice()),
            flat(self.layer1.u.as_slice()),
            flat(self.layer1.b.as_slice()),
            flat(self.layer2.w.as_slice()),
            flat(self.layer2.u.as_slice()),
            flat(self.layer2.b.as_slice()),
            flat(self.dense_w.as_slice()),
            flat(self.dense_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        fn flat(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("parameter tensors are contiguous")
        }
        [
            flat(self.layer1.w.as_slice_mut()),
            flat(self.layer1.u.as_slice_mut()),
            flat(self.layer1.b.as_slice_mut()),
            flat(self.layer2.w.as_slice_mut()),
            flat(self.layer2.u.as_slice_mut()),
            flat(self.layer2.b.as_slice_mut()),
            flat(self.dense_w.as_slice_mut()),
            flat(self.dense_b.as_slice_mut()),
        ]
    }

    pub fn architecture(&self, activation: Activation) -> Architecture {
        Architecture {
            layer1: self.layer1.hidden(),
            layer2: self.layer2.hidden(),
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layer1.validate()?;
        self.layer2.validate()?;
        if self.layer1.input_size() != INPUT_SIZE {
            return Err(Error::dim("layer 1 input", INPUT_SIZE, self.layer1.input_size()));
        }
        if self.layer2.input_size() != self.layer1.hidden() {
            return Err(Error::dim("layer 2 input", self.layer1.hidden(), self.layer2.input_size()));
        }
        if self.dense_w.len() != self.layer2.hidden() {
            return Err(Error::dim("dense weights", self.layer2.hidden(), self.dense_w.len()));
        }
        if self.dense_b.len() != 1 {
            return Err(Error::dim("dense bias", 1, self.dense_b.len()));
        }
        if self.dense_w.iter().chain(self.dense_b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("dense parameters must be finite".into()));
        }
        Ok(())
    }
}

/// A trained (or initialized) model, self-contained for prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub activation: Activation,
    pub window_len: usize,
    pub norm: Normalization,
    pub weights: Weights,
}

impl ModelParams {
    pub fn architecture(&self) -> Architecture {
        self.weights.architecture(self.activation)
    }

    /// Standardized output for one `window_len x 2` input window.
    pub fn forward(&self, window: &Array2<f64>) -> Result<f64> {
        if window.nrows() == 0 {
            return Err(Error::Validation("input window is empty".into()));
        }
        if window.ncols() != INPUT_SIZE {
            return Err(Error::dim("input window width", INPUT_SIZE, window.ncols()));
        }
        let xs: Vec<Array2<f64>> = window
            .rows()
            .into_iter()
            .map(|r| r.to_owned().insert_axis(ndarray::Axis(0)))
            .collect();
        Ok(forward_batch(&self.weights, self.activation, &xs)[0])
    }
}

/// Network outputs for a batch given as one `B x 2` matrix per step.
pub fn forward_batch(weights: &Weights, activation: Activation, xs: &[Array2<f64>]) -> Array1<f64> {
    let t1 = forward_sequence(&weights.layer1, activation, xs);
    let t2 = forward_sequence(&weights.layer2, activation, &t1.h[1..]);
    t2.last_h().dot(&weights.dense_w) + weights.dense_b[0]
}

/// Batch MSE and its exact gradient with respect to every parameter.
pub fn backward(
    weights: &Weights,
    activation: Activation,
    xs: &[Array2<f64>],
    targets: &Array1<f64>,
) -> Result<(f64, Weights)> {
    let batch = targets.len();
    if batch == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    if let Some(x) = xs.iter().find(|x| x.nrows() != batch) {
        return Err(Error::dim("batch rows", batch, x.nrows()));
    }
    let t1 = forward_sequence(&weights.layer1, activation, xs);
    let h1 = &t1.h[1..];
    let t2 = forward_sequence(&weights.layer2, activation, h1);
    let h2 = t2.last_h();
    let y = h2.dot(&weights.dense_w) + weights.dense_b[0];
    let err = &y - targets;
    let loss = err.iter().map(|e| e * e).sum::<f64>() / batch as f64;

    let dy = err * (2.0 / batch as f64);
    let mut grads = Weights::zeros(&weights.architecture(activation));
    grads.dense_w = h2.t().dot(&dy);
    grads.dense_b[0] = dy.sum();
    let dh2 = dy
        .view()
        .insert_axis(ndarray::Axis(1))
        .dot(&weights.dense_w.view().insert_axis(ndarray::Axis(0)));
    let dh1 = backward_sequence(
        &weights.layer2,
        activation,
        h1,
        &t2,
        Upstream::Last(&dh2),
        &mut grads.layer2,
        true,
    );
    backward_sequence(
        &weights.layer1,
        activation,
        xs,
        &t1,
        Upstream::Every(&dh1),
        &mut grads.layer1,
        false,
    );
    Ok((loss, grads))
}
