//! One LSTM layer: parameters, single-step reference cell, and batched
//! forward/backward over a sequence.
//!
//! Gate tensors are stacked row-wise in the order input, forget, candidate,
//! output, so `w` is `4H x I`, `u` is `4H x H` and `b` has `4H` entries.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GATES: [&str; 4] = ["input", "forget", "cell", "output"];

/// Nonlinearity used at the candidate and cell-output sites. Gates are
/// always logistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    /// The ReLU subgradient at 0 is 0.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Validation(format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w: Array2::zeros((4 * hidden, input_size)),
            u: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_size(&self) -> usize {
        self.w.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if h == 0 || self.input_size() == 0 {
            return Err(Error::Validation("LSTM layer has a zero dimension".into()));
        }
        if self.w.nrows() != 4 * h {
            return Err(Error::dim("LSTM input weights rows", 4 * h, self.w.nrows()));
        }
        if self.u.nrows() != 4 * h {
            return Err(Error::dim("LSTM recurrent weights rows", 4 * h, self.u.nrows()));
        }
        if self.b.len() != 4 * h {
            return Err(Error::dim("LSTM bias", 4 * h, self.b.len()));
        }
        if self.w.iter().chain(self.u.iter()).chain(self.b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Validation("LSTM parameters must be finite".into()));
        }
        Ok(())
    }

    /// Single-sample cell update, written directly from the gate equations.
    pub fn cell_step(
        &self,
        activation: Activation,
        x: ArrayView1<f64>,
        h_prev: ArrayView1<f64>,
        c_prev: ArrayView1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let hdim = self.hidden();
        if x.len() != self.input_size() {
            return Err(Error::dim("cell input", self.input_size(), x.len()));
        }
        if h_prev.len() != hdim || c_prev.len() != hdim {
            return Err(Error::dim("cell state", hdim, h_prev.len().min(c_prev.len())));
        }
        let z = self.w.dot(&x) + self.u.dot(&h_prev) + &self.b;
        let mut h = Array1::zeros(hdim);
        let mut c = Array1::zeros(hdim);
        for j in 0..hdim {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hdim + j]);
            let g = activation.apply(z[2 * hdim + j]);
            let o = sigmoid(z[3 * hdim + j]);
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * activation.apply(c[j]);
        }
        Ok((h, c))
    }
}

/// Everything the backward pass needs from a forward pass over one batch.
pub struct LayerTrace {
    /// `h[0]` is the zero initial state; `h[t + 1]` follows step `t`.
    pub h: Vec<Array2<f64>>,
    c: Vec<Array2<f64>>,
    /// Post-activation gates `[i | f | g | o]`, `B x 4H`, per step.
    gates: Vec<Array2<f64>>,
    /// `act(c)` per step.
    c_act: Vec<Array2<f64>>,
}

impl LayerTrace {
    pub fn last_h(&self) -> &Array2<f64> {
        self.h.last().expect("trace has the initial state")
    }
}

/// Runs the layer over `xs` (one `B x I` matrix per step) from zero state.
pub fn forward_sequence(
    params: &LstmLayerParams,
    activation: Activation,
    xs: &[Array2<f64>],
) -> LayerTrace {
    let hdim = params.hidden();
    let batch = xs.first().map_or(0, |x| x.nrows());
    let mut trace = LayerTrace {
        h: Vec::with_capacity(xs.len() + 1),
        c: Vec::with_capacity(xs.len() + 1),
        gates: Vec::with_capacity(xs.len()),
        c_act: Vec::with_capacity(xs.len()),
    };
    trace.h.push(Array2::zeros((batch, hdim)));
    trace.c.push(Array2::zeros((batch, hdim)));
    let b_row = params.b.view().insert_axis(Axis(0));
    for x in xs {
        let mut z = Array2::zeros((batch, 4 * hdim));
        z.assign(&b_row.broadcast((batch, 4 * hdim)).unwrap());
        general_mat_mul(1.0, x, &params.w.t(), 1.0, &mut z);
        general_mat_mul(1.0, trace.h.last().unwrap(), &params.u.t(), 1.0, &mut z);

        let c_prev = trace.c.last().unwrap();
        let mut c = Array2::zeros((batch, hdim));
        let mut c_act = Array2::zeros((batch, hdim));
        let mut h = Array2::zeros((batch, hdim));
        for r in 0..batch {
            let zr = z.row_mut(r).into_slice().unwrap();
            for j in 0..hdim {
                zr[j] = sigmoid(zr[j]);
                zr[hdim + j] = sigmoid(zr[hdim + j]);
                zr[2 * hdim + j] = activation.apply(zr[2 * hdim + j]);
                zr[3 * hdim + j] = sigmoid(zr[3 * hdim + j]);
            }
            let zr = z.row(r);
            for j in 0..hdim {
                let cv = zr[hdim + j] * c_prev[[r, j]] + zr[j] * zr[2 * hdim + j];
                let ca = activation.apply(cv);
                c[[r, j]] = cv;
                c_act[[r, j]] = ca;
                h[[r, j]] = zr[3 * hdim + j] * ca;
            }
        }
        trace.gates.push(z);
        trace.c.push(c);
        trace.c_act.push(c_act);
        trace.h.push(h);
    }
    trace
}

/// Loss gradient arriving at a layer's hidden outputs from above.
pub enum Upstream<'a> {
    /// Only the final hidden state feeds the next stage.
    Last(&'a Array2<f64>),
    /// Every step's hidden state feeds the next stage.
    Every(&'a [Array2<f64>]),
}

/// Backpropagation through time.
///
/// Parameter gradients are accumulated into `grads`. When `want_input_grad`
/// is set, returns `dL/dx_t` per step.
pub fn backward_sequence(
    params: &LstmLayerParams,
    activation: Activation,
    xs: &[Array2<f64>],
    trace: &LayerTrace,
    upstream: Upstream<'_>,
    grads: &mut LstmLayerParams,
    want_input_grad: bool,
) -> Vec<Array2<f64>> {
    let hdim = params.hidden();
    let steps = xs.len();
    let batch = xs.first().map_or(0, |x| x.nrows());
    let mut dh_next = Array2::<f64>::zeros((batch, hdim));
    let mut dc_next = Array2::<f64>::zeros((batch, hdim));
    let mut dxs = vec![Array2::zeros((0, 0)); if want_input_grad { steps } else { 0 }];
    let mut dz = Array2::<f64>::zeros((batch, 4 * hdim));

    for t in (0..steps).rev() {
        match upstream {
            Upstream::Last(d) if t + 1 == steps => dh_next += d,
            Upstream::Every(ds) => dh_next += &ds[t],
            Upstream::Last(_) => {}
        }
        let gates = &trace.gates[t];
        let c_prev = &trace.c[t];
        let c_act = &trace.c_act[t];
        for r in 0..batch {
            let gr = gates.row(r);
            let dzr = dz.row_mut(r).into_slice().unwrap();
            for j in 0..hdim {
                let (i, f, g, o) = (gr[j], gr[hdim + j], gr[2 * hdim + j], gr[3 * hdim + j]);
                let dh = dh_next[[r, j]];
                let ca = c_act[[r, j]];
                let d_o = dh * ca;
                let dc = dc_next[[r, j]] + dh * o * activation.derivative_from_output(ca);
                dzr[j] = dc * g * i * (1.0 - i);
                dzr[hdim + j] = dc * c_prev[[r, j]] * f * (1.0 - f);
                dzr[2 * hdim + j] = dc * i * activation.derivative_from_output(g);
                dzr[3 * hdim + j] = d_o * o * (1.0 - o);
                dc_next[[r, j]] = dc * f;
            }
        }
        general_mat_mul(1.0, &dz.t(), &xs[t], 1.0, &mut grads.w);
        general_mat_mul(1.0, &dz.t(), &trace.h[t], 1.0, &mut grads.u);
        grads.b += &dz.sum_axis(Axis(0));
        if want_input_grad {
            dxs[t] = dz.dot(&params.w);
        }
        dh_next = dz.dot(&params.u);
    }
    dxs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_layer(weight: f64) -> LstmLayerParams {
        LstmLayerParams {
            w: Array2::from_elem((4, 1), weight),
            u: Array2::from_elem((4, 1), weight),
            b: Array1::zeros(4),
        }
    }

    #[test]
    fn zero_parameters_give_zero_state() {
        let p = LstmLayerParams::zeros(3, 5);
        let (h, c) = p
            .cell_step(Activation::Relu, array![0.3, -2.0, 7.0].view(), Array1::zeros(5).view(), Array1::zeros(5).view())
            .unwrap();
        assert!(h.iter().chain(c.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_cell_hand_values() {
        let p = scalar_layer(1.0);
        let zero = Array1::zeros(1);
        let (h, c) = p.cell_step(Activation::Relu, array![1.0].view(), zero.view(), zero.view()).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((s1 - 0.731059).abs() < 1e-6);
        assert!((c[0] - s1).abs() < 1e-12);
        assert!((h[0] - 0.534447).abs() < 1e-6);

        let (h, c) = p.cell_step(Activation::Relu, array![-1.0].view(), zero.view(), zero.view()).unwrap();
        assert_eq!((h[0], c[0]), (0.0, 0.0));
    }

    #[test]
    fn cell_checks_dimensions() {
        let p = LstmLayerParams::zeros(2, 3);
        let z3 = Array1::zeros(3);
        assert!(p.cell_step(Activation::Relu, array![1.0].view(), z3.view(), z3.view()).is_err());
    }

    #[test]
    fn batched_forward_matches_cell_steps() {
        let mut rng = crate::rng::stream(5);
        let mut p = LstmLayerParams::zeros(2, 4);
        for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            *v = crate::rng::uniform_in(&mut rng, -1.0, 1.0);
        }
        let xs: Vec<Array2<f64>> = (0..5)
            .map(|_| Array2::from_shape_fn((3, 2), |_| crate::rng::uniform_in(&mut rng, -1.0, 1.0)))
            .collect();
        for act in [Activation::Relu, Activation::Tanh] {
            let trace = forward_sequence(&p, act, &xs);
            for r in 0..3 {
                let mut h = Array1::zeros(4);
                let mut c = Array1::zeros(4);
                for x in &xs {
                    (h, c) = p.cell_step(act, x.row(r), h.view(), c.view()).unwrap();
                }
                for j in 0..4 {
                    assert!((trace.last_h()[[r, j]] - h[j]).abs() < 1e-12);
                }
            }
        }
    }
}
