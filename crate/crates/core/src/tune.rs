//! Exhaustive grid search over layer sizes and epoch counts.
//!
//! Each (layer1, layer2) pair is trained once for the largest epoch
//! candidate; every candidate `e` is then scored from the recorded loss
//! history at epoch `e` as `loss_train(e) + loss_test(e)`.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ChannelDataset;
use crate::neural::{self, Activation, Architecture, TrainConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneGrid {
    pub layer1_values: Vec<usize>,
    pub layer2_values: Vec<usize>,
    pub epoch_candidates: Vec<usize>,
    pub activation: Activation,
    pub base_config: TrainConfig,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            layer1_values: vec![20, 40, 60, 80, 100],
            layer2_values: (2..=9).collect(),
            epoch_candidates: vec![25, 50, 75, 100, 125],
            activation: Activation::default(),
            base_config: TrainConfig::default(),
        }
    }
}

impl TuneGrid {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: &[usize]| {
            if v.is_empty() || v.contains(&0) {
                Err(Error::Validation(format!("{name} must be a non-empty list of positive counts")))
            } else {
                Ok(())
            }
        };
        check("layer1_values", &self.layer1_values)?;
        check("layer2_values", &self.layer2_values)?;
        check("epoch_candidates", &self.epoch_candidates)?;
        self.base_config.validate()
    }

    pub fn max_epochs(&self) -> usize {
        self.epoch_candidates.iter().copied().max().unwrap_or(0)
    }
}

/// Per-epoch loss history of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistory {
    pub loss_train: Vec<f64>,
    pub loss_test: Vec<f64>,
}

/// Anything that can produce a loss history for an architecture.
pub trait Trainer: Sync {
    fn history(&self, dataset: &ChannelDataset, arch: &Architecture, config: &TrainConfig) -> Result<LossHistory>;
}

/// The real LSTM trainer.
pub struct LstmTrainer;

impl Trainer for LstmTrainer {
    fn history(&self, dataset: &ChannelDataset, arch: &Architecture, config: &TrainConfig) -> Result<LossHistory> {
        let (_, report) = neural::train(dataset, arch, config)?;
        Ok(LossHistory {
            loss_train: report.loss_train,
            loss_test: report.loss_test,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub layer1: usize,
    pub layer2: usize,
    pub epochs: usize,
    pub loss_train: f64,
    pub loss_test: f64,
    pub score: f64,
    pub status: TuneStatus,
}

impl TuneRecord {
    /// Selection order: score, then test loss, then layer1, layer2, epochs.
    pub fn rank(&self, other: &TuneRecord) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.loss_test.total_cmp(&other.loss_test))
            .then(self.layer1.cmp(&other.layer1))
            .then(self.layer2.cmp(&other.layer2))
            .then(self.epochs.cmp(&other.epochs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// One row per (layer1, layer2, epoch candidate), in grid order.
    pub records: Vec<TuneRecord>,
    pub selected: Option<TuneRecord>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Seed for one (layer1, layer2) pair.
pub fn pair_seed(base: u64, layer1: usize, layer2: usize) -> u64 {
    rng::derive_seed(base, ((layer1 as u64) << 32) | layer2 as u64)
}

fn score_pair(
    trainer: &dyn Trainer,
    dataset: &ChannelDataset,
    grid: &TuneGrid,
    layer1: usize,
    layer2: usize,
) -> Vec<TuneRecord> {
    let arch = Architecture {
        layer1,
        layer2,
        activation: grid.activation,
    };
    let config = TrainConfig {
        epochs: grid.max_epochs(),
        rng_seed: pair_seed(grid.base_config.rng_seed, layer1, layer2),
        ..grid.base_config
    };
    let history = trainer.history(dataset, &arch, &config);
    grid.epoch_candidates
        .iter()
        .map(|&e| {
            let losses = history.as_ref().ok().and_then(|h| {
                let (a, b) = (*h.loss_train.get(e - 1)?, *h.loss_test.get(e - 1)?);
                (a.is_finite() && b.is_finite()).then_some((a, b))
            });
            match losses {
                Some((loss_train, loss_test)) => TuneRecord {
                    layer1,
                    layer2,
                    epochs: e,
                    loss_train,
                    loss_test,
                    score: loss_train + loss_test,
                    status: TuneStatus::Ok,
                },
                None => TuneRecord {
                    layer1,
                    layer2,
                    epochs: e,
                    loss_train: f64::INFINITY,
                    loss_test: f64::INFINITY,
                    score: f64::INFINITY,
                    status: TuneStatus::Failed,
                },
            }
        })
        .collect()
}

/// Runs the search with `trainer`. Pairs are trained concurrently on up to
/// `jobs` threads; results do not depend on `jobs`.
pub fn tune_with(trainer: &dyn Trainer, dataset: &ChannelDataset, grid: &TuneGrid, jobs: usize) -> Result<TuneResult> {
    grid.validate()?;
    let start = Instant::now();
    let pairs: Vec<(usize, usize)> = grid
        .layer1_values
        .iter()
        .flat_map(|&a| grid.layer2_values.iter().map(move |&b| (a, b)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let per_pair: Vec<Vec<TuneRecord>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(a, b)| score_pair(trainer, dataset, grid, a, b))
            .collect()
    });
    let records: Vec<TuneRecord> = per_pair.into_iter().flatten().collect();
    let selected = records
        .iter()
        .filter(|r| r.status == TuneStatus::Ok)
        .min_by(|a, b| a.rank(b))
        .cloned();
    Ok(TuneResult {
        records,
        selected,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

pub fn tune(dataset: &ChannelDataset, grid: &TuneGrid, jobs: usize) -> Result<TuneResult> {
    tune_with(&LstmTrainer, dataset, grid, jobs)
}
