//! Monte Carlo BER of BPSK over a symbol-spaced FIR derived from a TDL.
//!
//! SNR is Eb/N0 at the receiver: the FIR has unit energy and the complex
//! noise variance per sample is `1 / snr`. The receiver knows the channel
//! exactly and decides on the real part of the equalizer output.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TdlModel;
use crate::rng;

/// Symbols simulated per independently seeded block.
const BLOCK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equalizer {
    None,
    ZeroForcing,
    #[default]
    Mmse,
}

impl std::str::FromStr for Equalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Equalizer::None),
            "zf" | "zero-forcing" => Ok(Equalizer::ZeroForcing),
            "mmse" => Ok(Equalizer::Mmse),
            other => Err(Error::Validation(format!(
                "unknown equalizer `{other}` (expected none, zero-forcing or mmse)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerConfig {
    pub snr_db_points: Vec<f64>,
    pub symbols_per_point: u64,
    pub symbol_rate: f64,
    pub equalizer: Equalizer,
    pub equalizer_taps: usize,
    pub rng_seed: u64,
}

impl Default for BerConfig {
    fn default() -> Self {
        BerConfig {
            snr_db_points: (0..=10).map(|k| 2.0 * k as f64).collect(),
            symbols_per_point: 1_000_000,
            symbol_rate: 1e9,
            equalizer: Equalizer::Mmse,
            equalizer_taps: 31,
            rng_seed: 0x5EED_0BE2,
        }
    }
}

impl BerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db_points.is_empty() {
            return Err(Error::Validation("at least one SNR point is required".into()));
        }
        if self.snr_db_points.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation("SNR points must be finite".into()));
        }
        if self.snr_db_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("SNR points must be strictly ascending".into()));
        }
        if self.symbols_per_point < 10_000 {
            return Err(Error::Validation("symbols_per_point must be at least 10^4".into()));
        }
        if !(self.symbol_rate.is_finite() && self.symbol_rate > 0.0) {
            return Err(Error::Validation("symbol_rate must be positive".into()));
        }
        if self.equalizer_taps == 0 {
            return Err(Error::Validation("equalizer_taps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub points: Vec<BerPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerComparison {
    pub a: BerCurve,
    pub b: BerCurve,
    /// See [`max_log10_gap`].
    pub max_log10_gap: f64,
}

/// Gaussian tail probability `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Theoretical BPSK BER in AWGN at `snr_db` (Eb/N0).
pub fn bpsk_awgn_ber(snr_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Phase of FIR index `k` for a given seed, shared by every TDL mapped with
/// that seed so coinciding taps get identical phases.
fn tap_phase(seed: u64, k: usize) -> Complex64 {
    rng::unit_phasor(&mut rng::stream(rng::derive_seed(seed, k as u64)))
}

/// Symbol-spaced complex FIR with unit energy.
///
/// Each tap goes to the nearest symbol index (powers add on collision);
/// amplitudes are `sqrt(power)` with a seeded uniform phase per index.
pub fn tdl_to_fir(tdl: &TdlModel, symbol_rate: f64, seed: u64) -> Result<Vec<Complex64>> {
    if tdl.is_empty() {
        return Err(Error::Validation("cannot build a FIR from an empty TDL".into()));
    }
    if !(symbol_rate.is_finite() && symbol_rate > 0.0) {
        return Err(Error::Validation("symbol_rate must be positive".into()));
    }
    let peak = tdl.peak_db().expect("non-empty");
    let mut power: Vec<f64> = Vec::new();
    for t in tdl.taps() {
        let k = (t.delay_s * symbol_rate).round();
        if k < 0.0 {
            return Err(Error::Validation("TDL delays must be non-negative".into()));
        }
        let k = k as usize;
        if power.len() <= k {
            power.resize(k + 1, 0.0);
        }
        power[k] += 10f64.powf((t.power_db - peak) / 10.0);
    }
    let total: f64 = power.iter().sum();
    Ok(power
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if *p > 0.0 {
                tap_phase(seed, k) * (p / total).sqrt()
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect())
}

/// Linear receiver: `z[n] = sum_i conj(w[i]) y[n + delay - i]` estimates `s[n]`.
#[derive(Debug, Clone)]
struct Receiver {
    w: Vec<Complex64>,
    delay: usize,
}

fn design_receiver(fir: &[Complex64], eq: Equalizer, taps: usize, noise_var: f64) -> Result<Receiver> {
    if eq == Equalizer::None {
        let (m, h) = fir
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .expect("non-empty FIR");
        return Ok(Receiver {
            w: vec![*h / h.norm()],
            delay: m,
        });
    }
    let l = taps;
    let m = fir.len();
    let cols = l + m - 1;
    // y_vec(t) = [y[t], ..., y[t-L+1]] = H s_vec(t), s_vec(t) = [s[t], ..., s[t-L-M+2]]
    let h = DMatrix::from_fn(l, cols, |i, j| {
        if j >= i && j - i < m {
            fir[j - i]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let reg = match eq {
        Equalizer::Mmse => noise_var,
        _ => 1e-9,
    };
    let a = &h * h.adjoint() + DMatrix::<Complex64>::identity(l, l) * Complex64::new(reg, 0.0);
    let x = match a.clone().cholesky() {
        Some(c) => c.solve(&h),
        None => a
            .lu()
            .solve(&h)
            .ok_or_else(|| Error::Domain("equalizer normal equations are singular".into()))?,
    };
    // MSE(delay) = 1 - Re(h_d^H x_d)
    let mut best = (0usize, f64::NEG_INFINITY);
    for d in 0..cols {
        let gain = h.column(d).dotc(&x.column(d)).re;
        if gain > best.1 {
            best = (d, gain);
        }
    }
    let w: DVector<Complex64> = x.column(best.0).into_owned();
    Ok(Receiver {
        w: w.iter().copied().collect(),
        delay: best.0,
    })
}

fn run_block(fir: &[Complex64], rx: &Receiver, noise_var: f64, symbols: usize, seed: u64) -> u64 {
    let mut r = rng::stream(seed);
    let pad = fir.len() + rx.w.len() + rx.delay;
    let total = symbols + 2 * pad;
    let s: Vec<f64> = (0..total)
        .map(|_| if r.next_u64() >> 63 == 0 { 1.0 } else { -1.0 })
        .collect();
    let y: Vec<Complex64> = (0..total)
        .map(|t| {
            let mut acc = rng::complex_gaussian(&mut r, noise_var);
            for (k, h) in fir.iter().enumerate().take(t + 1) {
                acc += h * s[t - k];
            }
            acc
        })
        .collect();
    let mut errors = 0;
    for n in pad..pad + symbols {
        let t = n + rx.delay;
        let z: Complex64 = rx.w.iter().enumerate().map(|(i, w)| w.conj() * y[t - i]).sum();
        if (z.re >= 0.0) != (s[n] > 0.0) {
            errors += 1;
        }
    }
    errors
}

fn check_fir(fir: &[Complex64]) -> Result<()> {
    if fir.is_empty() {
        return Err(Error::Validation("FIR is empty".into()));
    }
    let energy: f64 = fir.iter().map(|h| h.norm_sqr()).sum();
    if (energy - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("FIR energy must be 1, got {energy}")));
    }
    Ok(())
}

/// BER at every configured SNR. Deterministic for a given seed: each SNR
/// point and each block of symbols draws from its own derived stream.
pub fn simulate_ber(fir: &[Complex64], config: &BerConfig) -> Result<BerCurve> {
    config.validate()?;
    check_fir(fir)?;
    let points = config
        .snr_db_points
        .par_iter()
        .map(|&snr_db| {
            let noise_var = 10f64.powf(-snr_db / 10.0);
            let rx = design_receiver(fir, config.equalizer, config.equalizer_taps, noise_var)?;
            let point_seed = rng::derive_seed_f64(config.rng_seed, snr_db);
            let n = config.symbols_per_point as usize;
            let blocks = n.div_ceil(BLOCK);
            let bit_errors: u64 = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let len = BLOCK.min(n - b * BLOCK);
                    run_block(fir, &rx, noise_var, len, rng::derive_seed(point_seed, b as u64))
                })
                .sum();
            Ok(BerPoint {
                snr_db,
                bit_errors,
                bits: config.symbols_per_point,
                ber: bit_errors as f64 / config.symbols_per_point as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve { points })
}

/// Largest `|log10 ber_a - log10 ber_b|` over matching SNR points where both
/// curves saw at least 10 errors; 0 when no point qualifies.
pub fn max_log10_gap(a: &BerCurve, b: &BerCurve) -> f64 {
    a.points
        .iter()
        .zip(&b.points)
        .filter(|(p, q)| p.snr_db == q.snr_db && p.bit_errors >= 10 && q.bit_errors >= 10)
        .map(|(p, q)| (p.ber.log10() - q.ber.log10()).abs())
        .fold(0.0, f64::max)
}

/// BER of two TDLs under identical bits, noise and per-index tap phases.
pub fn ber_compare(a: &TdlModel, b: &TdlModel, config: &BerConfig) -> Result<BerComparison> {
    let fa = tdl_to_fir(a, config.symbol_rate, config.rng_seed)?;
    let fb = tdl_to_fir(b, config.symbol_rate, config.rng_seed)?;
    let ca = simulate_ber(&fa, config)?;
    let cb = simulate_ber(&fb, config)?;
    let max_log10_gap = max_log10_gap(&ca, &cb);
    Ok(BerComparison {
        a: ca,
        b: cb,
        max_log10_gap,
    })
}
