//! Frequency-to-delay processing chain: minimum-phase reconstruction,
//! CTF/CIR transforms, power delay profiles, trend smoothing and TDL taps.
//!
//! Transform convention: the inverse carries the `1/N`, so
//! `h[n] = (1/N) sum_k W[k] H[k] exp(+j 2 pi k n / N)` and
//! `sum_n |h[n]|^2 = (1/N) sum_k |W[k] H[k]|^2`.

use std::f64::consts::LN_10;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cir, CtfRecord, FrequencyGrid, Pdp, TdlModel, TdlTap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Rectangular,
    #[default]
    Hann,
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "rect" => Ok(WindowKind::Rectangular),
            "hann" => Ok(WindowKind::Hann),
            other => Err(Error::Validation(format!("unknown window `{other}`"))),
        }
    }
}

/// Taper applied across the frequency axis before the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
}

impl WindowSpec {
    pub const RECTANGULAR: WindowSpec = WindowSpec {
        kind: WindowKind::Rectangular,
    };
    pub const HANN: WindowSpec = WindowSpec {
        kind: WindowKind::Hann,
    };

    /// Coefficients for `n` points: strictly positive, symmetric, peak 1.
    ///
    /// The Hann variant omits the zero end points
    /// (`0.5 - 0.5 cos(2 pi (k + 1) / (n + 1))`).
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self.kind {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::Hann => {
                let raw: Vec<f64> = (0..n)
                    .map(|k| {
                        0.5 - 0.5
                            * (2.0 * std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos()
                    })
                    .collect();
                let peak = raw.iter().cloned().fold(0.0, f64::max);
                raw.into_iter().map(|w| w / peak).collect()
            }
        }
    }
}

/// Moving-average width for trend extraction (dB domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct TrendSpec {
    window_bins: usize,
}

impl TrendSpec {
    pub fn new(window_bins: usize) -> Result<Self> {
        if window_bins < 3 || window_bins % 2 == 0 {
            return Err(Error::Validation(format!(
                "trend window must be odd and at least 3, got {window_bins}"
            )));
        }
        Ok(TrendSpec { window_bins })
    }

    pub fn window_bins(&self) -> usize {
        self.window_bins
    }
}

impl Default for TrendSpec {
    fn default() -> Self {
        TrendSpec { window_bins: 21 }
    }
}

impl TryFrom<usize> for TrendSpec {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        TrendSpec::new(n)
    }
}

impl From<TrendSpec> for usize {
    fn from(spec: TrendSpec) -> usize {
        spec.window_bins
    }
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(buf.len())
    } else {
        planner.plan_fft_forward(buf.len())
    };
    fft.process(buf);
}

/// Complex minimum-phase response whose magnitude is `gain_db`.
///
/// The band is treated as the non-negative half of a conjugate-symmetric
/// spectrum of length `M = 2(N - 1)`, i.e. grid index `k` sits at digital
/// frequency `pi k / (N - 1)`. The phase is the negated Hilbert transform of
/// `ln|H|`, computed by folding the real cepstrum onto its causal part.
pub fn minimum_phase_reconstruct(gain_db: &[f64], grid: &FrequencyGrid) -> Result<Vec<Complex64>> {
    let n = grid.n_points();
    if gain_db.len() != n {
        return Err(Error::dim("gain_db", n, gain_db.len()));
    }
    if let Some(k) = gain_db.iter().position(|g| !g.is_finite()) {
        return Err(Error::Domain(format!(
            "gain_db[{k}] = {} has no finite logarithm; floor magnitudes first",
            gain_db[k]
        )));
    }
    let magnitude: Vec<f64> = gain_db.iter().map(|g| 10f64.powf(g / 20.0)).collect();
    if n == 1 {
        return Ok(vec![Complex64::new(magnitude[0], 0.0)]);
    }

    let m = 2 * (n - 1);
    let log_mag: Vec<f64> = gain_db.iter().map(|g| g * LN_10 / 20.0).collect();
    let mut buf: Vec<Complex64> = (0..m)
        .map(|k| {
            let idx = if k < n { k } else { m - k };
            Complex64::new(log_mag[idx], 0.0)
        })
        .collect();
    fft_in_place(&mut buf, true);
    let scale = 1.0 / m as f64;
    let half = m / 2;
    for (i, c) in buf.iter_mut().enumerate() {
        // real cepstrum of a real even sequence is real
        let value = c.re * scale;
        let fold = match i {
            0 => 1.0,
            i if i < half => 2.0,
            i if i == half => 1.0,
            _ => 0.0,
        };
        *c = Complex64::new(value * fold, 0.0);
    }
    fft_in_place(&mut buf, false);
    Ok(magnitude
        .iter()
        .zip(&buf)
        .map(|(mag, spec)| Complex64::from_polar(*mag, spec.im))
        .collect())
}

pub fn ctf_to_cir(ctf: &[Complex64], grid: &FrequencyGrid, window: WindowSpec) -> Result<Cir> {
    let n = grid.n_points();
    if ctf.len() != n {
        return Err(Error::dim("CTF", n, ctf.len()));
    }
    let w = window.coefficients(n);
    let mut buf: Vec<Complex64> = ctf.iter().zip(&w).map(|(h, w)| h * w).collect();
    fft_in_place(&mut buf, true);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|x| *x *= scale);
    Cir::new(grid.delay_step_s(), buf)
}

/// Forward transform; exact inverse of [`ctf_to_cir`] with a rectangular window.
pub fn cir_to_ctf(cir: &Cir) -> Vec<Complex64> {
    let mut buf = cir.taps().to_vec();
    fft_in_place(&mut buf, false);
    buf
}

/// Where the phase of a CTF comes from before the inverse transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseSource {
    /// Use the record's stored complex gain.
    Measured,
    /// Reconstruct a minimum-phase response from the magnitude.
    #[default]
    MinimumPhase,
}

/// Impulse response of a record, taking the phase from `phase`.
pub fn record_to_cir(record: &CtfRecord, phase: PhaseSource, window: WindowSpec) -> Result<Cir> {
    let ctf = match phase {
        PhaseSource::Measured => record
            .complex_gain()
            .ok_or_else(|| {
                Error::Validation(format!(
                    "record at {} m has no stored phase",
                    record.distance_m()
                ))
            })?
            .to_vec(),
        PhaseSource::MinimumPhase => minimum_phase_reconstruct(record.gain_db(), record.grid())?,
    };
    ctf_to_cir(&ctf, record.grid(), window)
}

/// Peak-normalized power profile, clamped from below at `floor_db`.
pub fn cir_to_pdp(cir: &Cir, floor_db: f64) -> Result<Pdp> {
    if !(floor_db.is_finite() && floor_db < 0.0) {
        return Err(Error::Validation(format!(
            "PDP floor must be a finite negative dB value, got {floor_db}"
        )));
    }
    let power: Vec<f64> = cir.taps().iter().map(|h| h.norm_sqr()).collect();
    let peak = power.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Domain("impulse response is identically zero".into()));
    }
    let power_db = power
        .iter()
        .map(|p| {
            let db = 10.0 * (p / peak).log10();
            if db.is_finite() {
                db.max(floor_db)
            } else {
                floor_db
            }
        })
        .collect();
    Pdp::new(cir.delay_step_s(), power_db, floor_db)
}

/// Centered moving average of the dB profile. Near the ends the window is
/// truncated to the neighbors that exist.
pub fn extract_trend(pdp: &Pdp, spec: TrendSpec) -> Result<Pdp> {
    let n = pdp.len();
    let w = spec.window_bins();
    if w > n {
        return Err(Error::Validation(format!(
            "trend window of {w} bins exceeds profile length {n}"
        )));
    }
    let half = w / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for p in pdp.power_db() {
        prefix.push(prefix.last().unwrap() + p);
    }
    let trend = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    Pdp::new(pdp.delay_step_s(), trend, pdp.noise_floor_db())
}

/// Bins the profile into taps of width `bin_width_s` and drops bins more than
/// `threshold_db` below the strongest.
///
/// Bin `k` spans delays `[(k - 1/2) w, (k + 1/2) w)` and is reported at its
/// center `k w`. The profile is circular, so samples in the final half bin
/// belong to negative delays and fold into bin 0.
pub fn extract_tdl(pdp: &Pdp, bin_width_s: f64, threshold_db: f64) -> Result<TdlModel> {
    if !(bin_width_s.is_finite() && bin_width_s >= pdp.delay_step_s() * (1.0 - 1e-12)) {
        return Err(Error::Validation(format!(
            "TDL bin width {bin_width_s} s is finer than the delay step {} s",
            pdp.delay_step_s()
        )));
    }
    if !(threshold_db.is_finite() && threshold_db > 0.0) {
        return Err(Error::Validation(format!(
            "TDL threshold must be positive, got {threshold_db}"
        )));
    }
    let n = pdp.len();
    let span = n as f64 * pdp.delay_step_s();
    let mut bins: Vec<f64> = Vec::new();
    for (i, p) in pdp.power_db().iter().enumerate() {
        let mut delay = pdp.delay_s(i);
        if delay >= span - bin_width_s / 2.0 {
            delay -= span;
        }
        let k = (delay / bin_width_s + 0.5).floor().max(0.0) as usize;
        if bins.len() <= k {
            bins.resize(k + 1, 0.0);
        }
        bins[k] += 10f64.powf(p / 10.0);
    }
    let peak = bins.iter().cloned().fold(0.0, f64::max);
    let peak_db = 10.0 * peak.log10();
    let taps = bins
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(k, p)| TdlTap {
            delay_s: k as f64 * bin_width_s,
            power_db: 10.0 * p.log10(),
        })
        .filter(|t| t.power_db >= peak_db - threshold_db)
        .collect();
    TdlModel::new(taps, threshold_db)
}

/// Power-weighted standard deviation of the tap delays.
pub fn rms_delay_spread(tdl: &TdlModel) -> Result<f64> {
    let peak = tdl
        .peak_db()
        .ok_or_else(|| Error::Domain("delay spread of an empty TDL".into()))?;
    let weights: Vec<f64> = tdl
        .taps()
        .iter()
        .map(|t| 10f64.powf((t.power_db - peak) / 10.0))
        .collect();
    let total: f64 = weights.iter().sum();
    let mean = tdl
        .taps()
        .iter()
        .zip(&weights)
        .map(|(t, w)| w * t.delay_s)
        .sum::<f64>()
        / total;
    let var = tdl
        .taps()
        .iter()
        .zip(&weights)
        .map(|(t, w)| w * (t.delay_s - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(0.0, (n - 1) as f64, 1.0).unwrap()
    }

    /// Direct O(N^2) inverse DFT with 1/N, independent of the FFT path.
    fn naive_idft(h: &[Complex64]) -> Vec<Complex64> {
        let n = h.len();
        (0..n)
            .map(|t| {
                h.iter()
                    .enumerate()
                    .map(|(k, x)| x * Complex64::from_polar(1.0, 2.0 * PI * (k * t % n) as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    fn random_ctf(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = crate::rng::stream(seed);
        (0..n).map(|_| crate::rng::complex_gaussian(&mut rng, 1.0)).collect()
    }

    #[test]
    fn hann_is_positive_symmetric_unit_peak() {
        for n in [1, 2, 5, 250, 1001] {
            let w = WindowSpec::HANN.coefficients(n);
            assert!(w.iter().all(|x| *x > 0.0));
            for k in 0..n {
                assert!((w[k] - w[n - 1 - k]).abs() < 1e-12);
            }
            assert!((w.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fft_path_matches_direct_dft() {
        let g = grid(37);
        let h = random_ctf(37, 3);
        let cir = ctf_to_cir(&h, &g, WindowSpec::RECTANGULAR).unwrap();
        for (a, b) in cir.taps().iter().zip(naive_idft(&h)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_ctf_is_unit_impulse() {
        let g = grid(1001);
        let cir = ctf_to_cir(&vec![Complex64::new(1.0, 0.0); 1001], &g, WindowSpec::RECTANGULAR).unwrap();
        assert!((cir.taps()[0] - 1.0).norm() < 1e-12);
        assert!(cir.taps()[1..].iter().all(|h| h.norm() < 1e-12));
    }

    #[test]
    fn two_path_ctf_gives_two_taps() {
        let n = 1001;
        let h: Vec<Complex64> = (0..n)
            .map(|k| 1.0 + 0.5 * Complex64::from_polar(1.0, -2.0 * PI * (k * 50) as f64 / n as f64))
            .collect();
        let cir = ctf_to_cir(&h, &grid(n), WindowSpec::RECTANGULAR).unwrap();
        for (i, t) in cir.taps().iter().enumerate() {
            match i {
                0 => assert!((t.norm_sqr() - 1.0).abs() < 1e-12),
                50 => assert!((t.norm_sqr() - 0.25).abs() < 1e-12),
                _ => assert!(t.norm() < 1e-12),
            }
        }
    }

    #[test]
    fn unit_impulse_transforms_to_ones() {
        let mut taps = vec![Complex64::new(0.0, 0.0); 64];
        taps[0] = Complex64::new(1.0, 0.0);
        let ctf = cir_to_ctf(&Cir::new(1.0, taps).unwrap());
        assert!(ctf.iter().all(|h| (h - 1.0).norm() < 1e-12));
    }

    #[test]
    fn ctf_length_is_checked() {
        assert!(matches!(
            ctf_to_cir(&[Complex64::new(1.0, 0.0); 3], &grid(4), WindowSpec::HANN),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn flat_magnitude_has_zero_phase() {
        let g = grid(101);
        let h = minimum_phase_reconstruct(&vec![0.0; 101], &g).unwrap();
        assert!(h.iter().all(|x| (x - 1.0).norm() < 1e-12));
    }

    fn single_zero_gain_db(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let w = PI * k as f64 / (n - 1) as f64;
                20.0 * (a + b * Complex64::from_polar(1.0, -w)).norm().log10()
            })
            .collect()
    }

    #[test]
    fn single_zero_filter_phase_is_recovered() {
        let n = 1001;
        let h = minimum_phase_reconstruct(&single_zero_gain_db(1.0, 0.5, n), &grid(n)).unwrap();
        for k in 1..n - 1 {
            let w = PI * k as f64 / (n - 1) as f64;
            let want = (1.0 + 0.5 * Complex64::from_polar(1.0, -w)).arg();
            assert!((h[k].arg() - want).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn maximum_phase_zero_is_reflected() {
        let n = 1001;
        let h = minimum_phase_reconstruct(&single_zero_gain_db(1.0, 2.0, n), &grid(n)).unwrap();
        for k in 1..n - 1 {
            let w = PI * k as f64 / (n - 1) as f64;
            let min_phase = (2.0 + Complex64::from_polar(1.0, -w)).arg();
            let max_phase = (1.0 + 2.0 * Complex64::from_polar(1.0, -w)).arg();
            assert!((h[k].arg() - min_phase).abs() < 1e-6);
            if k > 10 && k < n - 10 {
                assert!((h[k].arg() - max_phase).abs() > 1e-3);
            }
        }
    }

    #[test]
    fn minimum_phase_rejects_log_singularity() {
        let mut g = vec![0.0; 11];
        g[4] = f64::NEG_INFINITY;
        assert!(matches!(minimum_phase_reconstruct(&g, &grid(11)), Err(Error::Domain(_))));
    }

    #[test]
    fn minimum_phase_impulse_response_is_causal() {
        // echo channel with |a| < 1 is minimum phase already: recovered CIR is 1 + a z^-m
        let n = 401;
        let g = grid(n);
        let gain: Vec<f64> = (0..n)
            .map(|k| {
                let w = PI * k as f64 / (n - 1) as f64;
                20.0 * (1.0 + Complex64::from_polar(0.4, -8.0 * w)).norm().log10()
            })
            .collect();
        let h = minimum_phase_reconstruct(&gain, &g).unwrap();
        for k in 0..n {
            let w = PI * k as f64 / (n - 1) as f64;
            let want = 1.0 + Complex64::from_polar(0.4, -8.0 * w);
            assert!((h[k] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn pdp_examples() {
        let mut taps = vec![Complex64::new(0.0, 0.0); 8];
        taps[3] = Complex64::new(1.0, 0.0);
        let pdp = cir_to_pdp(&Cir::new(1e-9, taps.clone()).unwrap(), -40.0).unwrap();
        assert_eq!(pdp.power_db()[3], 0.0);
        assert!(pdp.power_db().iter().enumerate().all(|(i, p)| i == 3 || *p == -40.0));

        taps[5] = Complex64::new(0.0, 0.5);
        let pdp = cir_to_pdp(&Cir::new(1e-9, taps).unwrap(), -40.0).unwrap();
        assert!((pdp.power_db()[5] + 6.020599913279624).abs() < 1e-9);

        let zero = Cir::new(1e-9, vec![Complex64::new(0.0, 0.0); 4]).unwrap();
        assert!(matches!(cir_to_pdp(&zero, -40.0), Err(Error::Domain(_))));
        assert!(cir_to_pdp(&zero, 3.0).is_err());
    }

    #[test]
    fn trend_examples() {
        let pdp = Pdp::new(1.0, vec![0.0, -10.0, 0.0, -10.0, 0.0], -50.0).unwrap();
        let t = extract_trend(&pdp, TrendSpec::new(3).unwrap()).unwrap();
        let want = [-5.0, -10.0 / 3.0, -20.0 / 3.0, -10.0 / 3.0, -5.0];
        for (a, b) in t.power_db().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = Pdp::new(1.0, vec![-7.5; 30], -50.0).unwrap();
        let t = extract_trend(&flat, TrendSpec::default()).unwrap();
        assert!(t.power_db().iter().all(|p| (p + 7.5).abs() < 1e-12));
        assert!(extract_trend(&pdp, TrendSpec::new(7).unwrap()).is_err());
        assert!(TrendSpec::new(4).is_err());
        assert!(TrendSpec::new(1).is_err());
    }

    #[test]
    fn trend_cancels_alternating_ripple() {
        let n = 300;
        let signal: Vec<f64> = (0..n).map(|i| -0.1 * i as f64 - 5.0 * (i as f64 / 20.0).sin()).collect();
        let rippled: Vec<f64> = signal
            .iter()
            .enumerate()
            .map(|(i, s)| s + if i % 2 == 0 { 3.0 } else { -3.0 })
            .collect();
        let spec = TrendSpec::default();
        let a = extract_trend(&Pdp::new(1.0, signal, -80.0).unwrap(), spec).unwrap();
        let b = extract_trend(&Pdp::new(1.0, rippled, -80.0).unwrap(), spec).unwrap();
        for i in 10..n - 10 {
            assert!((a.power_db()[i] - b.power_db()[i]).abs() < 0.5);
        }
    }

    #[test]
    fn tdl_single_sample() {
        let mut p = vec![-60.0; 100];
        p[23] = 0.0;
        let pdp = Pdp::new(0.1e-9, p, -60.0).unwrap();
        let tdl = extract_tdl(&pdp, 1e-9, 25.0).unwrap();
        assert_eq!(tdl.len(), 1);
        assert!((tdl.taps()[0].delay_s - 2e-9).abs() < 1e-18);
    }

    #[test]
    fn tdl_sums_power_within_bin() {
        let mut p = vec![-60.0; 100];
        p[31] = 0.0;
        p[33] = 0.0;
        let pdp = Pdp::new(0.1e-9, p, -60.0).unwrap();
        let tdl = extract_tdl(&pdp, 1e-9, 25.0).unwrap();
        assert_eq!(tdl.len(), 1);
        assert!((tdl.taps()[0].delay_s - 3e-9).abs() < 1e-18);
        assert!((tdl.taps()[0].power_db - 10.0 * 2f64.log10()).abs() < 1e-3);
    }

    #[test]
    fn tdl_folds_circular_tail_into_first_bin() {
        let mut p = vec![-90.0; 100];
        p[0] = 0.0;
        p[99] = 0.0;
        let pdp = Pdp::new(0.1e-9, p, -90.0).unwrap();
        let tdl = extract_tdl(&pdp, 1e-9, 25.0).unwrap();
        assert_eq!(tdl.taps()[0].delay_s, 0.0);
        assert!((tdl.taps()[0].power_db - 10.0 * 2f64.log10()).abs() < 1e-6);
    }

    #[test]
    fn tdl_rejects_bad_parameters() {
        let pdp = Pdp::new(1e-9, vec![0.0; 10], -40.0).unwrap();
        assert!(extract_tdl(&pdp, 0.5e-9, 25.0).is_err());
        assert!(extract_tdl(&pdp, 1e-9, 0.0).is_err());
    }

    #[test]
    fn delay_spread_examples() {
        let tap = |d: f64, p: f64| TdlTap { delay_s: d * 1e-9, power_db: p };
        let one = TdlModel::new(vec![tap(5.0, -3.0)], 25.0).unwrap();
        assert_eq!(rms_delay_spread(&one).unwrap(), 0.0);
        let two = TdlModel::new(vec![tap(0.0, 0.0), tap(10.0, 0.0)], 25.0).unwrap();
        assert!((rms_delay_spread(&two).unwrap() - 5e-9).abs() < 1e-18);
        let p: f64 = 0.1;
        let want = (p * 100.0 / (1.0 + p) - (10.0 * p / (1.0 + p)).powi(2)).sqrt();
        let uneven = TdlModel::new(vec![tap(0.0, 0.0), tap(10.0, -10.0)], 25.0).unwrap();
        let got = rms_delay_spread(&uneven).unwrap() * 1e9;
        assert!((got - want).abs() < 1e-9);
        assert!((got - 2.8748).abs() < 1e-4);
        assert!(rms_delay_spread(&TdlModel::new(vec![], 25.0).unwrap()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn parseval_and_round_trip(seed in any::<u64>(), n in 2usize..300) {
            let g = grid(n);
            let h = random_ctf(n, seed);
            let cir = ctf_to_cir(&h, &g, WindowSpec::RECTANGULAR).unwrap();
            let time: f64 = cir.taps().iter().map(|x| x.norm_sqr()).sum();
            let freq: f64 = h.iter().map(|x| x.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((time - freq).abs() <= 1e-9 * freq);
            let back = cir_to_ctf(&cir);
            let scale = h.iter().map(|x| x.norm()).fold(0.0, f64::max);
            for (a, b) in back.iter().zip(&h) {
                prop_assert!((a - b).norm() <= 1e-9 * scale);
            }
        }

        #[test]
        fn minimum_phase_preserves_magnitude(
            gain in prop::collection::vec(-120.0f64..20.0, 2..200),
        ) {
            let g = grid(gain.len());
            let h = minimum_phase_reconstruct(&gain, &g).unwrap();
            for (x, db) in h.iter().zip(&gain) {
                let mag = 10f64.powf(db / 20.0);
                prop_assert!((x.norm() - mag).abs() <= 1e-9 * mag);
            }
        }

        #[test]
        fn trend_smooths_monotonically(
            profile in prop::collection::vec(-60.0f64..0.0, 60..200),
        ) {
            let spec = TrendSpec::new(5).unwrap();
            let pdp = Pdp::new(1.0, profile.clone(), -60.0).unwrap();
            let once = extract_trend(&pdp, spec).unwrap();
            let twice = extract_trend(&once, spec).unwrap();
            let tv = |v: &[f64]| v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
            let n = profile.len();
            // a full-window average never has more variation than its support
            prop_assert!(tv(&twice.power_db()[4..n - 4]) <= tv(&once.power_db()[2..n - 2]) + 1e-9);
            prop_assert!(tv(&once.power_db()[2..n - 2]) <= tv(&profile) + 1e-9);
        }

        #[test]
        fn tdl_invariants_hold(
            profile in prop::collection::vec(-50.0f64..0.0, 20..400),
            width in 1usize..12,
            threshold in 1.0f64..40.0,
        ) {
            let pdp = Pdp::new(0.1e-9, profile.clone(), -50.0).unwrap();
            let tdl = extract_tdl(&pdp, width as f64 * 0.1e-9, threshold).unwrap();
            prop_assert!(!tdl.is_empty());
            prop_assert!(tdl.taps().windows(2).all(|w| w[1].delay_s > w[0].delay_s));
            let peak = tdl.peak_db().unwrap();
            prop_assert!(tdl.taps().iter().all(|t| t.power_db >= peak - threshold));
            let tap_power: f64 = tdl.taps().iter().map(|t| 10f64.powf(t.power_db / 10.0)).sum();
            let pdp_power: f64 = profile.iter().map(|p| 10f64.powf(p / 10.0)).sum();
            prop_assert!(tap_power <= pdp_power + 1e-9);
        }

        #[test]
        fn delay_spread_is_translation_invariant(
            taps in prop::collection::vec(-20.0f64..0.0, 1..20),
            offset in -30.0f64..30.0,
            shift in 0.0f64..50.0,
        ) {
            let build = |off: f64, sh: f64| {
                TdlModel::new(
                    taps.iter().enumerate().map(|(i, p)| TdlTap {
                        delay_s: (i as f64 + sh) * 1e-9,
                        power_db: p + off,
                    }).collect(),
                    25.0,
                ).unwrap()
            };
            let base = rms_delay_spread(&build(0.0, 0.0)).unwrap();
            prop_assert!((rms_delay_spread(&build(offset, 0.0)).unwrap() - base).abs() < 1e-15);
            prop_assert!((rms_delay_spread(&build(0.0, shift)).unwrap() - base).abs() < 1e-15);
        }
    }
}
