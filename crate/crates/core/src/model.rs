//! Domain types shared by every stage of the pipeline.
//!
//! All types validate their invariants on construction and expose their
//! contents read-only, so a value that exists is a valid value.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default training distances, in meters.
pub const DEFAULT_TRAIN_DISTANCES_M: [f64; 13] = [
    1.18, 1.47, 1.66, 2.24, 2.35, 3.66, 5.12, 5.16, 6.66, 6.76, 8.18, 9.36, 9.72,
];

/// Held-out distances: one interpolation and one extrapolation case.
pub const DEFAULT_TEST_DISTANCES_M: [f64; 2] = [3.7, 9.75];

const GRID_TOLERANCE: f64 = 1e-9;

/// Uniform frequency grid `f_start, f_start + f_step, ..., f_stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct FrequencyGrid {
    f_start: f64,
    f_stop: f64,
    f_step: f64,
    n_points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    f_start: f64,
    f_stop: f64,
    f_step: f64,
}

impl TryFrom<GridSpec> for FrequencyGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        FrequencyGrid::new(spec.f_start, spec.f_stop, spec.f_step)
    }
}

impl From<FrequencyGrid> for GridSpec {
    fn from(grid: FrequencyGrid) -> Self {
        GridSpec {
            f_start: grid.f_start,
            f_stop: grid.f_stop,
            f_step: grid.f_step,
        }
    }
}

impl FrequencyGrid {
    pub fn new(f_start: f64, f_stop: f64, f_step: f64) -> Result<Self> {
        if !(f_start.is_finite() && f_stop.is_finite() && f_step.is_finite()) {
            return Err(Error::Validation("frequency grid bounds must be finite".into()));
        }
        if f_step <= 0.0 {
            return Err(Error::Validation(format!("f_step must be positive, got {f_step}")));
        }
        if f_stop <= f_start {
            return Err(Error::Validation(format!(
                "f_stop ({f_stop}) must exceed f_start ({f_start})"
            )));
        }
        let steps = (f_stop - f_start) / f_step;
        let rounded = steps.round();
        if (steps - rounded).abs() > GRID_TOLERANCE * rounded.max(1.0) {
            return Err(Error::Validation(format!(
                "span {} Hz is not an integer multiple of step {f_step} Hz",
                f_stop - f_start
            )));
        }
        Ok(FrequencyGrid {
            f_start,
            f_stop,
            f_step,
            n_points: rounded as usize + 1,
        })
    }

    /// 55 GHz to 65 GHz in 10 MHz steps (1001 points).
    pub fn cabin_default() -> Self {
        FrequencyGrid::new(55e9, 65e9, 10e6).expect("default grid is valid")
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn f_stop(&self) -> f64 {
        self.f_stop
    }

    pub fn f_step(&self) -> f64 {
        self.f_step
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f_start + k as f64 * self.f_step
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|k| self.frequency(k))
    }

    /// Delay resolution of the inverse transform, `1 / (N * f_step)`.
    pub fn delay_step_s(&self) -> f64 {
        1.0 / (self.n_points as f64 * self.f_step)
    }

    /// Unambiguous delay span, `1 / f_step`.
    pub fn max_unaliased_delay_s(&self) -> f64 {
        1.0 / self.f_step
    }
}

/// Channel transfer function at one transmitter-receiver distance.
#[derive(Debug, Clone, PartialEq)]
pub struct CtfRecord {
    distance_m: f64,
    grid: FrequencyGrid,
    gain_db: Vec<f64>,
    complex_gain: Option<Vec<Complex64>>,
}

impl CtfRecord {
    pub fn new(distance_m: f64, grid: FrequencyGrid, gain_db: Vec<f64>) -> Result<Self> {
        if !(distance_m.is_finite() && distance_m > 0.0) {
            return Err(Error::Validation(format!(
                "distance must be positive, got {distance_m}"
            )));
        }
        if gain_db.len() != grid.n_points() {
            return Err(Error::dim("gain_db", grid.n_points(), gain_db.len()));
        }
        if let Some(k) = gain_db.iter().position(|g| !g.is_finite()) {
            return Err(Error::Validation(format!(
                "gain_db[{k}] at {distance_m} m is not finite"
            )));
        }
        Ok(CtfRecord {
            distance_m,
            grid,
            gain_db,
            complex_gain: None,
        })
    }

    /// Builds a record from complex linear gains; `gain_db` is derived.
    pub fn from_complex(
        distance_m: f64,
        grid: FrequencyGrid,
        complex_gain: Vec<Complex64>,
    ) -> Result<Self> {
        let gain_db = complex_gain.iter().map(|h| 20.0 * h.norm().log10()).collect();
        let mut record = CtfRecord::new(distance_m, grid, gain_db)?;
        record.complex_gain = Some(complex_gain);
        Ok(record)
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn gain_db(&self) -> &[f64] {
        &self.gain_db
    }

    pub fn complex_gain(&self) -> Option<&[Complex64]> {
        self.complex_gain.as_deref()
    }

    /// Drops the phase, keeping only what the CSV interchange format carries.
    pub fn magnitude_only(&self) -> CtfRecord {
        CtfRecord {
            complex_gain: None,
            ..self.clone()
        }
    }
}

/// Complex channel impulse response on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cir {
    delay_step_s: f64,
    taps: Vec<Complex64>,
}

impl Cir {
    pub fn new(delay_step_s: f64, taps: Vec<Complex64>) -> Result<Self> {
        if !(delay_step_s.is_finite() && delay_step_s > 0.0) {
            return Err(Error::Validation(format!(
                "delay step must be positive, got {delay_step_s}"
            )));
        }
        if taps.is_empty() {
            return Err(Error::Validation("impulse response has no taps".into()));
        }
        Ok(Cir { delay_step_s, taps })
    }

    pub fn delay_step_s(&self) -> f64 {
        self.delay_step_s
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Power delay profile in dB, floored at `noise_floor_db`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdp {
    delay_step_s: f64,
    power_db: Vec<f64>,
    noise_floor_db: f64,
}

impl Pdp {
    pub fn new(delay_step_s: f64, power_db: Vec<f64>, noise_floor_db: f64) -> Result<Self> {
        if !(delay_step_s.is_finite() && delay_step_s > 0.0) {
            return Err(Error::Validation(format!(
                "delay step must be positive, got {delay_step_s}"
            )));
        }
        if power_db.is_empty() {
            return Err(Error::Validation("power delay profile is empty".into()));
        }
        if let Some(n) = power_db.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("power_db[{n}] is not finite")));
        }
        if !noise_floor_db.is_finite() {
            return Err(Error::Validation("noise floor must be finite".into()));
        }
        Ok(Pdp {
            delay_step_s,
            power_db,
            noise_floor_db,
        })
    }

    pub fn delay_step_s(&self) -> f64 {
        self.delay_step_s
    }

    pub fn power_db(&self) -> &[f64] {
        &self.power_db
    }

    pub fn noise_floor_db(&self) -> f64 {
        self.noise_floor_db
    }

    pub fn len(&self) -> usize {
        self.power_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_db.is_empty()
    }

    pub fn delay_s(&self, n: usize) -> f64 {
        n as f64 * self.delay_step_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdlTap {
    pub delay_s: f64,
    pub power_db: f64,
}

/// Sparse tapped-delay-line summary of a power delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TdlModel {
    taps: Vec<TdlTap>,
    threshold_db: f64,
}

impl TdlModel {
    pub fn new(taps: Vec<TdlTap>, threshold_db: f64) -> Result<Self> {
        if !(threshold_db.is_finite() && threshold_db > 0.0) {
            return Err(Error::Validation(format!(
                "TDL threshold must be positive, got {threshold_db}"
            )));
        }
        for tap in &taps {
            if !(tap.delay_s.is_finite() && tap.power_db.is_finite()) {
                return Err(Error::Validation("TDL tap values must be finite".into()));
            }
        }
        if taps.windows(2).any(|w| w[1].delay_s <= w[0].delay_s) {
            return Err(Error::Validation("TDL tap delays must be strictly increasing".into()));
        }
        let max = taps.iter().map(|t| t.power_db).fold(f64::NEG_INFINITY, f64::max);
        if let Some(t) = taps.iter().find(|t| t.power_db < max - threshold_db) {
            return Err(Error::Validation(format!(
                "tap at {:.3} ns is {:.2} dB below the peak, beyond the {threshold_db} dB threshold",
                t.delay_s * 1e9,
                max - t.power_db
            )));
        }
        Ok(TdlModel { taps, threshold_db })
    }

    pub fn taps(&self) -> &[TdlTap] {
        &self.taps
    }

    pub fn threshold_db(&self) -> f64 {
        self.threshold_db
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    /// Strongest tap power; `None` for an empty model.
    pub fn peak_db(&self) -> Option<f64> {
        self.taps.iter().map(|t| t.power_db).reduce(f64::max)
    }

    /// Power level below which taps were discarded.
    pub fn floor_db(&self) -> Option<f64> {
        self.peak_db().map(|p| p - self.threshold_db)
    }

    /// Same taps with every power shifted by `offset_db`.
    pub fn offset(&self, offset_db: f64) -> TdlModel {
        TdlModel {
            taps: self
                .taps
                .iter()
                .map(|t| TdlTap {
                    delay_s: t.delay_s,
                    power_db: t.power_db + offset_db,
                })
                .collect(),
            threshold_db: self.threshold_db,
        }
    }
}

/// Records for every distance, split into training and held-out sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    records: Vec<CtfRecord>,
    train_distances_m: Vec<f64>,
    test_distances_m: Vec<f64>,
}

impl ChannelDataset {
    pub fn new(
        records: Vec<CtfRecord>,
        train_distances_m: Vec<f64>,
        test_distances_m: Vec<f64>,
    ) -> Result<Self> {
        for d in train_distances_m.iter().chain(&test_distances_m) {
            if !(d.is_finite() && *d > 0.0) {
                return Err(Error::Validation(format!("distance must be positive, got {d}")));
            }
        }
        if let Some(d) = train_distances_m.iter().find(|d| test_distances_m.contains(d)) {
            return Err(Error::Validation(format!(
                "distance {d} m is in both the training and test sets"
            )));
        }
        let listed: Vec<f64> = train_distances_m.iter().chain(&test_distances_m).copied().collect();
        for (i, d) in listed.iter().enumerate() {
            if listed[..i].contains(d) {
                return Err(Error::Validation(format!("duplicate distance {d} m")));
            }
            let n = records.iter().filter(|r| r.distance_m() == *d).count();
            if n != 1 {
                return Err(Error::Validation(format!(
                    "distance {d} m has {n} records, expected exactly one"
                )));
            }
        }
        if let Some(r) = records.iter().find(|r| !listed.contains(&r.distance_m())) {
            return Err(Error::Validation(format!(
                "record at {} m is in neither split",
                r.distance_m()
            )));
        }
        if let Some(r) = records.iter().find(|r| r.grid() != records[0].grid()) {
            return Err(Error::Validation(format!(
                "record at {} m uses a different frequency grid",
                r.distance_m()
            )));
        }
        Ok(ChannelDataset {
            records,
            train_distances_m,
            test_distances_m,
        })
    }

    pub fn records(&self) -> &[CtfRecord] {
        &self.records
    }

    pub fn train_distances_m(&self) -> &[f64] {
        &self.train_distances_m
    }

    pub fn test_distances_m(&self) -> &[f64] {
        &self.test_distances_m
    }

    pub fn record(&self, distance_m: f64) -> Option<&CtfRecord> {
        self.records.iter().find(|r| r.distance_m() == distance_m)
    }

    /// Training records in ascending distance order.
    pub fn train_records(&self) -> Vec<&CtfRecord> {
        self.sorted(&self.train_distances_m)
    }

    /// Test records in ascending distance order.
    pub fn test_records(&self) -> Vec<&CtfRecord> {
        self.sorted(&self.test_distances_m)
    }

    pub fn grid(&self) -> Option<&FrequencyGrid> {
        self.records.first().map(|r| r.grid())
    }

    fn sorted(&self, distances: &[f64]) -> Vec<&CtfRecord> {
        let mut out: Vec<&CtfRecord> = distances.iter().filter_map(|d| self.record(*d)).collect();
        out.sort_by(|a, b| a.distance_m().total_cmp(&b.distance_m()));
        out
    }
}
