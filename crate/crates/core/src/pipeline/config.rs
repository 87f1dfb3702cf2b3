//! Experiment configuration document (TOML).
//!
//! ```toml
//! version = 1
//! seed = 7
//! out_dir = "runs/default"
//!
//! [grid]
//! f_start = 55.0e9
//! f_stop = 57.5e9
//! f_step = 10.0e6
//! ```
//!
//! Omitted sections take their module defaults. When `seed` is set, the
//! synth, train and BER streams are derived from it unless the section sets
//! its own `rng_seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ber::BerConfig;
use crate::dsp::{TrendSpec, WindowKind, WindowSpec};
use crate::error::{Error, Result};
use crate::model::{FrequencyGrid, DEFAULT_TEST_DISTANCES_M, DEFAULT_TRAIN_DISTANCES_M};
use crate::neural::{Architecture, TrainConfig};
use crate::rng;
use crate::synth::SynthParams;
use crate::tune::TuneGrid;

pub const CONFIG_VERSION: u32 = 1;

const SYNTH_SEED_KEY: u64 = 1;
const TRAIN_SEED_KEY: u64 = 2;
const BER_SEED_KEY: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_distances_m: Vec<f64>,
    pub test_distances_m: Vec<f64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_distances_m: DEFAULT_TRAIN_DISTANCES_M.to_vec(),
            test_distances_m: DEFAULT_TEST_DISTANCES_M.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub window: WindowKind,
    pub trend_bins: TrendSpec,
    pub tdl_bin_ns: f64,
    pub tdl_threshold_db: f64,
    /// PDP floor relative to the peak.
    pub floor_db: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            window: WindowKind::Hann,
            trend_bins: TrendSpec::default(),
            tdl_bin_ns: 1.0,
            tdl_threshold_db: 25.0,
            floor_db: -60.0,
        }
    }
}

impl DspConfig {
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec { kind: self.window }
    }

    pub fn tdl_bin_s(&self) -> f64 {
        self.tdl_bin_ns * 1e-9
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tdl_bin_ns.is_finite() && self.tdl_bin_ns > 0.0) {
            return Err(Error::Validation("dsp.tdl_bin_ns must be positive".into()));
        }
        if !(self.tdl_threshold_db.is_finite() && self.tdl_threshold_db > 0.0) {
            return Err(Error::Validation("dsp.tdl_threshold_db must be positive".into()));
        }
        if !(self.floor_db.is_finite() && self.floor_db < -self.tdl_threshold_db) {
            return Err(Error::Validation(
                "dsp.floor_db must be finite and below minus the TDL threshold".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub layer1_values: Vec<usize>,
    pub layer2_values: Vec<usize>,
    pub epoch_candidates: Vec<usize>,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        let g = TuneGrid::default();
        TuneSection {
            layer1_values: g.layer1_values,
            layer2_values: g.layer2_values,
            epoch_candidates: g.epoch_candidates,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Largest acceptable trend-vs-predicted tap error (`evaluate --strict`).
    pub tap_error_threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            tap_error_threshold: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct ExplicitSeeds {
    synth: bool,
    train: bool,
    ber: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: Option<u64>,
    /// Pipeline directory. Relative paths are resolved against the config
    /// file's directory. Not part of any content hash.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub grid: FrequencyGrid,
    pub split: SplitConfig,
    pub synth: SynthParams,
    pub model: Architecture,
    pub train: TrainConfig,
    pub tune: TuneSection,
    pub dsp: DspConfig,
    pub ber: BerConfig,
    pub evaluate: EvaluateConfig,
    #[serde(skip)]
    explicit: ExplicitSeeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: None,
            out_dir: PathBuf::from("out"),
            grid: FrequencyGrid::cabin_default(),
            split: SplitConfig::default(),
            synth: SynthParams::default(),
            model: Architecture::default(),
            train: TrainConfig::default(),
            tune: TuneSection::default(),
            dsp: DspConfig::default(),
            ber: BerConfig::default(),
            evaluate: EvaluateConfig::default(),
            explicit: ExplicitSeeds::default(),
        }
    }
}

fn has_key(table: &toml::Table, section: &str, key: &str) -> bool {
    table
        .get(section)
        .and_then(|s| s.as_table())
        .is_some_and(|s| s.contains_key(key))
}

impl ExperimentConfig {
    /// Parses a document; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match table.get("version").map(|v| v.as_integer()) {
            None => return Err(Error::Config(format!("missing `version = {CONFIG_VERSION}`"))),
            Some(Some(v)) if v == CONFIG_VERSION as i64 => {}
            Some(_) => {
                return Err(Error::Config(format!(
                    "unsupported config version (this build reads version {CONFIG_VERSION})"
                )))
            }
        }
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.explicit = ExplicitSeeds {
            synth: has_key(&table, "synth", "rng_seed"),
            train: has_key(&table, "train", "rng_seed"),
            ber: has_key(&table, "ber", "rng_seed"),
        };
        if config.out_dir.is_relative() {
            config.out_dir = base_dir.join(&config.out_dir);
        }
        if let Some(seed) = config.seed {
            config.set_seed(seed);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Sets the global seed and re-derives every stream whose section does
    /// not pin its own `rng_seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if !self.explicit.synth {
            self.synth.rng_seed = rng::derive_seed(seed, SYNTH_SEED_KEY);
        }
        if !self.explicit.train {
            self.train.rng_seed = rng::derive_seed(seed, TRAIN_SEED_KEY);
        }
        if !self.explicit.ber {
            self.ber.rng_seed = rng::derive_seed(seed, BER_SEED_KEY);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        if self.split.train_distances_m.is_empty() || self.split.test_distances_m.is_empty() {
            return Err(Error::Validation("split needs at least one train and one test distance".into()));
        }
        self.synth.validate(&self.grid)?;
        self.model.validate()?;
        self.train.validate()?;
        self.tune_grid().validate()?;
        self.dsp.validate()?;
        self.ber.validate()?;
        let t = self.evaluate.tap_error_threshold;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Validation("evaluate.tap_error_threshold must be non-negative".into()));
        }
        Ok(())
    }

    /// Search grid built on the `[train]` settings and `[model]` activation.
    pub fn tune_grid(&self) -> TuneGrid {
        TuneGrid {
            layer1_values: self.tune.layer1_values.clone(),
            layer2_values: self.tune.layer2_values.clone(),
            epoch_candidates: self.tune.epoch_candidates.clone(),
            activation: self.model.activation,
            base_config: self.train,
        }
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn content_hash(&self) -> String {
        super::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
