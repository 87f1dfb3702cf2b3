use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{ChannelDataset, CtfRecord, FrequencyGrid};

use super::INPUT_SIZE;

/// Affine input scaling and target standardization, fitted on the training
/// split and stored with the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub f_min: f64,
    pub f_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            f_min: 0.0,
            f_max: 1.0,
            d_min: 0.0,
            d_max: 1.0,
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn fit(train: &[&CtfRecord]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Validation("no training records".into()))?;
        let mut n = Normalization {
            f_min: f64::INFINITY,
            f_max: f64::NEG_INFINITY,
            d_min: f64::INFINITY,
            d_max: f64::NEG_INFINITY,
            target_mean: 0.0,
            target_std: 1.0,
        };
        let mut count = 0usize;
        let mut sum = 0.0;
        for r in train {
            if r.grid() != first.grid() {
                return Err(Error::Validation("training records use different grids".into()));
            }
            n.f_min = n.f_min.min(r.grid().f_start());
            n.f_max = n.f_max.max(r.grid().f_stop());
            n.d_min = n.d_min.min(r.distance_m());
            n.d_max = n.d_max.max(r.distance_m());
            sum += r.gain_db().iter().sum::<f64>();
            count += r.gain_db().len();
        }
        n.target_mean = sum / count as f64;
        let var = train
            .iter()
            .flat_map(|r| r.gain_db())
            .map(|g| (g - n.target_mean).powi(2))
            .sum::<f64>()
            / count as f64;
        n.target_std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Ok(n)
    }

    pub fn frequency(&self, f: f64) -> f64 {
        scale(f, self.f_min, self.f_max)
    }

    pub fn distance(&self, d: f64) -> f64 {
        scale(d, self.d_min, self.d_max)
    }

    pub fn standardize(&self, gain_db: f64) -> f64 {
        (gain_db - self.target_mean) / self.target_std
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Frequencies outside the fitted range cannot be predicted.
    pub fn check_grid(&self, grid: &FrequencyGrid) -> Result<()> {
        let tol = 1e-9 * self.f_max.abs().max(1.0);
        if grid.f_start() < self.f_min - tol || grid.f_stop() > self.f_max + tol {
            return Err(Error::Validation(format!(
                "grid {}..{} Hz extends beyond the trained frequency range {}..{} Hz",
                grid.f_start(),
                grid.f_stop(),
                self.f_min,
                self.f_max
            )));
        }
        Ok(())
    }
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span > 0.0 {
        (x - lo) / span
    } else {
        x - lo
    }
}

struct Series {
    distance: f64,
    frequency: Vec<f64>,
    target: Vec<f64>,
}

/// Sliding windows over the frequency axis, one sample per (record,
/// frequency index), ordered by distance and then frequency.
///
/// The window for index `i` covers indices `i - L + 1 ..= i`; positions
/// before the start of the grid repeat grid point 0.
pub struct SequenceSet {
    window_len: usize,
    series: Vec<Series>,
    samples: Vec<(usize, usize)>,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// (distance, frequency index) of sample `i`.
    pub fn sample_key(&self, i: usize) -> (f64, usize) {
        let (s, k) = self.samples[i];
        (self.series[s].distance, k)
    }

    pub fn target(&self, i: usize) -> f64 {
        let (s, k) = self.samples[i];
        self.series[s].target[k]
    }

    fn step(&self, i: usize, t: usize) -> [f64; INPUT_SIZE] {
        let (s, k) = self.samples[i];
        let series = &self.series[s];
        let idx = (k + t + 1).saturating_sub(self.window_len);
        [series.frequency[idx], series.distance]
    }

    /// `window_len x 2` input of sample `i`.
    pub fn window(&self, i: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.window_len, INPUT_SIZE), |(t, c)| self.step(i, t)[c])
    }

    /// Step-major batch inputs (one `B x 2` matrix per step) and targets.
    pub fn batch(&self, indices: &[usize]) -> (Vec<Array2<f64>>, Array1<f64>) {
        let xs = (0..self.window_len)
            .map(|t| {
                Array2::from_shape_fn((indices.len(), INPUT_SIZE), |(r, c)| self.step(indices[r], t)[c])
            })
            .collect();
        let targets = indices.iter().map(|&i| self.target(i)).collect();
        (xs, targets)
    }

    /// Windows for an arbitrary distance on `grid`; targets are zero.
    pub fn query(norm: &Normalization, distance_m: f64, grid: &FrequencyGrid, window_len: usize) -> Result<Self> {
        check_window(window_len)?;
        let series = Series {
            distance: norm.distance(distance_m),
            frequency: grid.frequencies().map(|f| norm.frequency(f)).collect(),
            target: vec![0.0; grid.n_points()],
        };
        Ok(SequenceSet {
            window_len,
            samples: (0..grid.n_points()).map(|k| (0, k)).collect(),
            series: vec![series],
        })
    }
}

fn check_window(window_len: usize) -> Result<()> {
    if window_len == 0 {
        return Err(Error::Validation("window length must be at least 1".into()));
    }
    Ok(())
}

/// Windows over `records` (sorted by distance internally) using `norm`.
pub fn build_windows(records: &[&CtfRecord], norm: &Normalization, window_len: usize) -> Result<SequenceSet> {
    check_window(window_len)?;
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.distance_m().total_cmp(&b.distance_m()));
    let series: Vec<Series> = sorted
        .iter()
        .map(|r| Series {
            distance: norm.distance(r.distance_m()),
            frequency: r.grid().frequencies().map(|f| norm.frequency(f)).collect(),
            target: r.gain_db().iter().map(|g| norm.standardize(*g)).collect(),
        })
        .collect();
    let samples = series
        .iter()
        .enumerate()
        .flat_map(|(s, x)| (0..x.target.len()).map(move |k| (s, k)))
        .collect();
    Ok(SequenceSet {
        window_len,
        series,
        samples,
    })
}

/// Normalization fitted on the training split plus the training windows.
pub fn build_training_windows(dataset: &ChannelDataset, window_len: usize) -> Result<(Normalization, SequenceSet)> {
    let train = dataset.train_records();
    let norm = Normalization::fit(&train)?;
    Ok((norm, build_windows(&train, &norm, window_len)?))
}
