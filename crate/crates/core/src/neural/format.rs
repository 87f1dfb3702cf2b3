//! Plain-text model file.
//!
//! ```text
//! cabinwave-lstm 1
//! activation relu
//! window_len 32
//! layer1 100
//! layer2 9
//! norm f_min 5.5000000000000000e10
//! ...
//! tensor layer1.input.W 100 2
//! <row-major values, one row per line>
//! ```
//!
//! Values are written with 17 significant digits so a write/read cycle is
//! exact.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{s, Array2};

use super::{Activation, Architecture, ModelParams, Normalization, Weights, GATES, INPUT_SIZE};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "cabinwave-lstm";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, data: impl Iterator<Item = f64>) {
    let _ = writeln!(out, "tensor {name} {rows} {cols}");
    let data: Vec<f64> = data.collect();
    for r in 0..rows {
        let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| num(*v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

/// Serializes the model to the text format.
pub fn write_model(model: &ModelParams) -> String {
    let arch = model.architecture();
    let n = &model.norm;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {MODEL_FORMAT_VERSION}");
    let _ = writeln!(out, "activation {}", model.activation.name());
    let _ = writeln!(out, "window_len {}", model.window_len);
    let _ = writeln!(out, "layer1 {}", arch.layer1);
    let _ = writeln!(out, "layer2 {}", arch.layer2);
    for (k, v) in [
        ("f_min", n.f_min),
        ("f_max", n.f_max),
        ("d_min", n.d_min),
        ("d_max", n.d_max),
        ("target_mean", n.target_mean),
        ("target_std", n.target_std),
    ] {
        let _ = writeln!(out, "norm {k} {}", num(v));
    }
    for (lname, layer) in [("layer1", &model.weights.layer1), ("layer2", &model.weights.layer2)] {
        let h = layer.hidden();
        for (g, gate) in GATES.iter().enumerate() {
            let rows = g * h..(g + 1) * h;
            let w = layer.w.slice(s![rows.clone(), ..]);
            push_tensor(&mut out, &format!("{lname}.{gate}.W"), h, w.ncols(), w.iter().copied());
            let u = layer.u.slice(s![rows.clone(), ..]);
            push_tensor(&mut out, &format!("{lname}.{gate}.U"), h, h, u.iter().copied());
            push_tensor(&mut out, &format!("{lname}.{gate}.b"), 1, h, layer.b.slice(s![rows]).iter().copied());
        }
    }
    let w = &model.weights;
    push_tensor(&mut out, "dense.W", 1, w.dense_w.len(), w.dense_w.iter().copied());
    push_tensor(&mut out, "dense.b", 1, 1, w.dense_b.iter().copied());
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        for (i, line) in self.iter.by_ref() {
            let line = line.trim();
            if !line.is_empty() && !line.starts_with('#') {
                return Ok((i + 1, line.split_whitespace().collect()));
            }
        }
        Err(parse_err(0, "unexpected end of file"))
    }

    fn keyed(&mut self, key: &str, n: usize) -> Result<(usize, Vec<&'a str>)> {
        let (ln, f) = self.next()?;
        if f[0] != key || f.len() != n + 1 {
            return Err(parse_err(ln, &format!("expected `{key}` with {n} value(s)")));
        }
        Ok((ln, f[1..].to_vec()))
    }
}

fn parse_err(line: usize, msg: &str) -> Error {
    let context = if line == 0 { "model file".to_string() } else { format!("model file line {line}") };
    Error::parse(context, msg)
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| parse_err(line, &format!("invalid number `{s}`")))
}

/// Parses the text format, validating every shape and value.
pub fn read_model(text: &str) -> Result<ModelParams> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (ln, v) = lines.keyed(MAGIC, 1)?;
    let version: u32 = parse_num(ln, v[0])?;
    if version != MODEL_FORMAT_VERSION {
        return Err(parse_err(ln, &format!("unsupported model format version {version}")));
    }
    let (ln, v) = lines.keyed("activation", 1)?;
    let activation: Activation = v[0].parse().map_err(|_| parse_err(ln, "unknown activation"))?;
    let (ln, v) = lines.keyed("window_len", 1)?;
    let window_len: usize = parse_num(ln, v[0])?;
    let (ln, v) = lines.keyed("layer1", 1)?;
    let layer1: usize = parse_num(ln, v[0])?;
    let (ln, v) = lines.keyed("layer2", 1)?;
    let layer2: usize = parse_num(ln, v[0])?;
    let arch = Architecture { layer1, layer2, activation };
    arch.validate()?;
    if window_len == 0 {
        return Err(parse_err(ln, "window_len must be at least 1"));
    }

    let mut norm_vals = HashMap::new();
    for _ in 0..6 {
        let (ln, f) = lines.next()?;
        if f.len() != 3 || f[0] != "norm" {
            return Err(parse_err(ln, "expected `norm <name> <value>`"));
        }
        let v: f64 = parse_num(ln, f[2])?;
        if !v.is_finite() {
            return Err(parse_err(ln, "normalization constants must be finite"));
        }
        norm_vals.insert(f[1].to_string(), v);
    }
    let get = |k: &str| {
        norm_vals
            .get(k)
            .copied()
            .ok_or_else(|| parse_err(0, &format!("missing normalization constant `{k}`")))
    };
    let norm = Normalization {
        f_min: get("f_min")?,
        f_max: get("f_max")?,
        d_min: get("d_min")?,
        d_max: get("d_max")?,
        target_mean: get("target_mean")?,
        target_std: get("target_std")?,
    };

    let mut read_tensor = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let (ln, f) = lines.keyed("tensor", 3)?;
        if f[0] != name {
            return Err(parse_err(ln, &format!("expected tensor `{name}`, found `{}`", f[0])));
        }
        let shape: (usize, usize) = (parse_num(ln, f[1])?, parse_num(ln, f[2])?);
        if shape != (rows, cols) {
            return Err(parse_err(ln, &format!("tensor `{name}` has shape {shape:?}, expected ({rows}, {cols})")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, f) = lines.next()?;
            if f.len() != cols {
                return Err(parse_err(ln, &format!("tensor `{name}` row has {} values, expected {cols}", f.len())));
            }
            for s in f {
                let v: f64 = parse_num(ln, s)?;
                if !v.is_finite() {
                    return Err(parse_err(ln, &format!("non-finite value in tensor `{name}`")));
                }
                data.push(v);
            }
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    };

    let mut weights = Weights::zeros(&arch);
    for (lname, input, layer) in [
        ("layer1", INPUT_SIZE, &mut weights.layer1),
        ("layer2", layer1, &mut weights.layer2),
    ] {
        let h = layer.hidden();
        for (g, gate) in GATES.iter().enumerate() {
            let rows = g * h..(g + 1) * h;
            let w = read_tensor(&format!("{lname}.{gate}.W"), h, input)?;
            layer.w.slice_mut(s![rows.clone(), ..]).assign(&w);
            let u = read_tensor(&format!("{lname}.{gate}.U"), h, h)?;
            layer.u.slice_mut(s![rows.clone(), ..]).assign(&u);
            let b = read_tensor(&format!("{lname}.{gate}.b"), 1, h)?;
            layer.b.slice_mut(s![rows]).assign(&b.row(0));
        }
    }
    weights.dense_w.assign(&read_tensor("dense.W", 1, layer2)?.row(0));
    weights.dense_b.assign(&read_tensor("dense.b", 1, 1)?.row(0));
    weights.validate()?;
    Ok(ModelParams {
        activation,
        window_len,
        norm,
        weights,
    })
}
