//! Staged experiment runner.
//!
//! Stages run in the order synth, train, predict, pdp, tdl, ber, evaluate.
//! Each writes its files under `<out>/<stage>/` and finishes by writing
//! `<stage>/stamp.json`, which records a key (SHA-256 over the stage's own
//! settings and the digests of its upstream outputs), the config hash, the
//! stage seed and the digest of every output. A stage is skipped when its
//! stamp carries the current key and every listed output still matches.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{DspConfig, EvaluateConfig, ExperimentConfig, SplitConfig, TuneSection, CONFIG_VERSION};
pub use report::{
    comparison_table, compare_taps, profiles, tdl_of, ComparisonRow, DelaySpreads, DistanceSummary, DistanceTdls,
    EvaluationReport, MetricPair, TapCounts, TrainingSummary, REPORT_FORMAT_VERSION,
};

use crate::ber::{self, BerCurve, BerPoint};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{ChannelDataset, CtfRecord, FrequencyGrid, Pdp, TdlModel};
use crate::neural::{self, Architecture, ModelParams, TrainConfig};
use crate::synth;
use crate::tune::{self, LossHistory, LstmTrainer, TuneResult, Trainer};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Train,
    Predict,
    Pdp,
    Tdl,
    Ber,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Train,
        Stage::Predict,
        Stage::Pdp,
        Stage::Tdl,
        Stage::Ber,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Pdp => "pdp",
            Stage::Tdl => "tdl",
            Stage::Ber => "ber",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Train => &[Stage::Synth],
            Stage::Predict => &[Stage::Synth, Stage::Train],
            Stage::Pdp => &[Stage::Synth, Stage::Predict],
            Stage::Tdl => &[Stage::Pdp],
            Stage::Ber => &[Stage::Tdl],
            Stage::Evaluate => &[Stage::Synth, Stage::Train, Stage::Predict, Stage::Pdp, Stage::Tdl, Stage::Ber],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub key: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Output path relative to the pipeline directory -> SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub executed: bool,
}

/// Exclusive ownership of a pipeline directory; released on drop.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::File { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Label used in per-distance file names, e.g. `3.7m`.
pub fn distance_label(distance_m: f64) -> String {
    format!("{distance_m}m")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct BerRow {
    snr_db: f64,
    bits: u64,
    errors_measured: u64,
    ber_measured: f64,
    errors_trend: u64,
    ber_trend: f64,
    errors_predicted: u64,
    ber_predicted: f64,
    ber_awgn: f64,
}

#[derive(Debug, Serialize)]
struct CtfPlotRow {
    freq_ghz: f64,
    measured_db: f64,
    predicted_db: f64,
}

#[derive(Debug, Serialize)]
struct PdpPlotRow {
    delay_ns: f64,
    measured_db: f64,
    trend_db: f64,
    predicted_db: f64,
}

#[derive(Debug, Serialize)]
struct TdlPlotRow {
    model: &'static str,
    delay_ns: f64,
    power_db: f64,
}

pub struct Pipeline {
    config: ExperimentConfig,
    dir: PathBuf,
    config_hash: String,
    _lock: DirLock,
}

impl Pipeline {
    /// Validates the config, creates the output directory and locks it.
    pub fn open(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dir = config.out_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::File {
            path: dir.clone(),
            source: e,
        })?;
        let lock = DirLock::acquire(&dir)?;
        Ok(Pipeline {
            config_hash: config.content_hash(),
            config,
            dir,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn stamp_path(&self, stage: Stage) -> PathBuf {
        self.dir.join(stage.name()).join("stamp.json")
    }

    fn stage_settings(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        match stage {
            Stage::Synth => json!({ "grid": c.grid, "split": c.split, "synth": c.synth }),
            Stage::Train => json!({ "model": c.model, "train": c.train }),
            Stage::Predict => json!({}),
            Stage::Pdp => json!({
                "window": c.dsp.window,
                "trend_bins": c.dsp.trend_bins,
                "floor_db": c.dsp.floor_db,
            }),
            Stage::Tdl => json!({
                "tdl_bin_ns": c.dsp.tdl_bin_ns,
                "tdl_threshold_db": c.dsp.tdl_threshold_db,
                "floor_db": c.dsp.floor_db,
            }),
            Stage::Ber => json!({ "ber": c.ber }),
            Stage::Evaluate => json!({
                "evaluate": c.evaluate,
                "config_hash": self.config_hash,
                "seed": c.seed,
            }),
        }
    }

    fn stage_seed(&self, stage: Stage) -> Option<u64> {
        match stage {
            Stage::Synth => Some(self.config.synth.rng_seed),
            Stage::Train => Some(self.config.train.rng_seed),
            Stage::Ber => Some(self.config.ber.rng_seed),
            _ => self.config.seed,
        }
    }

    /// The stamp of `stage` if present and every output it lists is intact.
    pub fn valid_stamp(&self, stage: Stage) -> Result<Option<Stamp>> {
        let path = self.stamp_path(stage);
        if !path.exists() {
            return Ok(None);
        }
        let stamp: Stamp = match serde_json::from_str(&io::read_to_string(&path)?) {
            Ok(s) => s,
            Err(_) => return Ok(None),
        };
        for (rel, digest) in &stamp.outputs {
            let p = self.path(rel);
            if !p.exists() || file_digest(&p)? != *digest {
                return Ok(None);
            }
        }
        Ok(Some(stamp))
    }

    fn stage_key(&self, stage: Stage) -> Result<String> {
        let mut upstream = Vec::new();
        for &u in stage.upstream() {
            let stamp = self.valid_stamp(u)?.ok_or_else(|| Error::MissingArtifact {
                stage: u.name(),
                path: self.stamp_path(u),
            })?;
            upstream.push(json!({ "stage": u.name(), "outputs": stamp.outputs }));
        }
        let doc = json!({
            "stage": stage.name(),
            "settings": self.stage_settings(stage),
            "upstream": upstream,
        });
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    /// True when `stage` would be skipped by [`Pipeline::ensure`].
    pub fn is_current(&self, stage: Stage) -> Result<bool> {
        let key = self.stage_key(stage)?;
        Ok(self.valid_stamp(stage)?.is_some_and(|s| s.key == key))
    }

    /// Runs `stage` unless its outputs are current. Upstream stages must
    /// already be complete. Returns whether the stage executed.
    pub fn ensure(&self, stage: Stage) -> Result<bool> {
        let key = self.stage_key(stage)?;
        if self.valid_stamp(stage)?.is_some_and(|s| s.key == key) {
            return Ok(false);
        }
        let stamp_path = self.stamp_path(stage);
        let stage_dir = self.dir.join(stage.name());
        let prepare = || -> Result<()> {
            fs::create_dir_all(&stage_dir).map_err(|e| Error::File {
                path: stage_dir.clone(),
                source: e,
            })?;
            if stamp_path.exists() {
                fs::remove_file(&stamp_path).map_err(|e| Error::File {
                    path: stamp_path.clone(),
                    source: e,
                })?;
            }
            Ok(())
        };
        let wrap = |e: Error| Error::Stage {
            stage: stage.name(),
            source: Box::new(e),
        };
        prepare().map_err(wrap)?;
        let outputs = self.execute(stage).map_err(wrap)?;
        let mut digests = BTreeMap::new();
        for rel in outputs {
            let d = file_digest(&self.path(&rel)).map_err(wrap)?;
            digests.insert(rel, d);
        }
        let stamp = Stamp {
            stage: stage.name().to_string(),
            key,
            config_hash: self.config_hash.clone(),
            seed: self.stage_seed(stage),
            outputs: digests,
        };
        let tmp = stamp_path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&stamp)? + "\n";
        io::write_string(&tmp, &text).map_err(wrap)?;
        fs::rename(&tmp, &stamp_path).map_err(|e| {
            wrap(Error::File {
                path: stamp_path.clone(),
                source: e,
            })
        })?;
        Ok(true)
    }

    /// Brings `stage` and everything upstream of it up to date.
    pub fn run_through(&self, stage: Stage) -> Result<Vec<StageOutcome>> {
        let mut outcomes = Vec::new();
        for s in Stage::ALL.into_iter().filter(|s| *s <= stage) {
            outcomes.push(StageOutcome {
                stage: s,
                executed: self.ensure(s)?,
            });
        }
        Ok(outcomes)
    }

    pub fn run(&self) -> Result<Vec<StageOutcome>> {
        self.run_through(Stage::Evaluate)
    }

    fn execute(&self, stage: Stage) -> Result<Vec<String>> {
        match stage {
            Stage::Synth => self.exec_synth(),
            Stage::Train => self.exec_train(),
            Stage::Predict => self.exec_predict(),
            Stage::Pdp => self.exec_pdp(),
            Stage::Tdl => self.exec_tdl(),
            Stage::Ber => self.exec_ber(),
            Stage::Evaluate => self.exec_evaluate(),
        }
    }

    fn write_csv_file(&self, rel: &str, f: impl FnOnce(fs::File) -> Result<()>) -> Result<String> {
        let path = self.path(rel);
        let file = fs::File::create(&path).map_err(|e| Error::File { path, source: e })?;
        f(file)?;
        Ok(rel.to_string())
    }

    fn require(&self, stage: Stage, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                stage: stage.name(),
                path: p,
            })
        }
    }

    // ---- artifact readers ----

    pub fn dataset(&self) -> Result<ChannelDataset> {
        let split_path = self.require(Stage::Synth, "synth/split.json")?;
        let split: SplitConfig = serde_json::from_str(&io::read_to_string(&split_path)?)?;
        let data = self.require(Stage::Synth, "synth/dataset.csv")?;
        let records = io::read_ctf_csv(io::open(&data)?, None)?;
        ChannelDataset::new(records, split.train_distances_m, split.test_distances_m)
    }

    pub fn model(&self) -> Result<ModelParams> {
        let p = self.require(Stage::Train, "train/model.txt")?;
        neural::read_model(&io::read_to_string(&p)?)
    }

    pub fn predicted(&self, grid: &FrequencyGrid) -> Result<Vec<CtfRecord>> {
        let p = self.require(Stage::Predict, "predict/predicted.csv")?;
        io::read_ctf_csv(io::open(&p)?, Some(grid))
    }

    fn record_pair(&self, dataset: &ChannelDataset, predicted: &[CtfRecord], d: f64) -> Result<(CtfRecord, CtfRecord)> {
        let m = dataset
            .record(d)
            .ok_or_else(|| Error::Validation(format!("dataset has no record at {d} m")))?;
        let p = predicted
            .iter()
            .find(|r| r.distance_m() == d)
            .ok_or_else(|| Error::MissingArtifact {
                stage: "predict",
                path: self.path("predict/predicted.csv"),
            })?;
        Ok((m.clone(), p.clone()))
    }

    fn read_pdp(&self, rel: &str, grid: &FrequencyGrid) -> Result<(Pdp, Pdp)> {
        let p = self.require(Stage::Pdp, rel)?;
        let floor = self.config.dsp.floor_db;
        let (pdp, trend) = io::read_pdp_csv(io::open(&p)?, floor)?;
        // Use the grid's exact delay step rather than the one re-derived
        // from printed delays, so binning matches the in-memory path.
        let step = grid.delay_step_s();
        Ok((
            Pdp::new(step, pdp.power_db().to_vec(), floor)?,
            Pdp::new(step, trend.power_db().to_vec(), floor)?,
        ))
    }

    fn read_tdls(&self, d: f64) -> Result<DistanceTdls> {
        let label = distance_label(d);
        let thr = self.config.dsp.tdl_threshold_db;
        let read = |name: &str| -> Result<TdlModel> {
            let p = self.require(Stage::Tdl, &format!("tdl/{name}_{label}.csv"))?;
            io::read_tdl_csv(io::open(&p)?, thr)
        };
        Ok(DistanceTdls {
            distance_m: d,
            measured: read("measured")?,
            trend: read("trend")?,
            predicted: read("predicted")?,
        })
    }

    fn read_ber(&self, d: f64) -> Result<Vec<BerRow>> {
        let p = self.require(Stage::Ber, &format!("ber/ber_{}.csv", distance_label(d)))?;
        io::read_csv(io::open(&p)?, "BER")
    }

    /// The last evaluation report written by the evaluate stage.
    pub fn report(&self) -> Result<EvaluationReport> {
        let p = self.require(Stage::Evaluate, "evaluate/report.json")?;
        Ok(serde_json::from_str(&io::read_to_string(&p)?)?)
    }

    // ---- stages ----

    fn exec_synth(&self) -> Result<Vec<String>> {
        let c = &self.config;
        let ds = synth::generate_dataset(&c.split.train_distances_m, &c.split.test_distances_m, &c.grid, &c.synth)?;
        let records: Vec<&CtfRecord> = ds.records().iter().collect();
        let mut out = vec![self.write_csv_file("synth/dataset.csv", |f| io::write_ctf_csv(f, &records))?];
        let split = serde_json::to_string_pretty(&c.split)? + "\n";
        io::write_string(&self.path("synth/split.json"), &split)?;
        out.push("synth/split.json".into());
        Ok(out)
    }

    fn exec_train(&self) -> Result<Vec<String>> {
        let ds = self.dataset()?;
        let (model, report) = neural::train(&ds, &self.config.model, &self.config.train)?;
        io::write_string(&self.path("train/model.txt"), &neural::write_model(&model))?;
        let loss = self.write_csv_file("train/loss.csv", |f| {
            io::write_loss_csv(f, &report.loss_train, &report.loss_test)
        })?;
        Ok(vec!["train/model.txt".into(), loss])
    }

    fn exec_predict(&self) -> Result<Vec<String>> {
        let ds = self.dataset()?;
        let model = self.model()?;
        let grid = *ds.grid().expect("dataset is non-empty");
        let predicted = ds
            .test_distances_m()
            .iter()
            .map(|&d| neural::predict_ctf(&model, d, &grid))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CtfRecord> = predicted.iter().collect();
        Ok(vec![self.write_csv_file("predict/predicted.csv", |f| io::write_ctf_csv(f, &refs))?])
    }

    fn exec_pdp(&self) -> Result<Vec<String>> {
        let ds = self.dataset()?;
        let grid = *ds.grid().expect("dataset is non-empty");
        let predicted = self.predicted(&grid)?;
        let mut out = Vec::new();
        for &d in ds.test_distances_m() {
            let (m, p) = self.record_pair(&ds, &predicted, d)?;
            let label = distance_label(d);
            for (name, rec) in [("measured", &m), ("predicted", &p)] {
                let (pdp, trend) = profiles(rec, &self.config.dsp)?;
                out.push(self.write_csv_file(&format!("pdp/{name}_{label}.csv"), |f| {
                    io::write_pdp_csv(f, &pdp, &trend)
                })?);
            }
        }
        Ok(out)
    }

    fn test_distances_and_grid(&self) -> Result<(Vec<f64>, FrequencyGrid)> {
        let ds = self.dataset()?;
        Ok((ds.test_distances_m().to_vec(), *ds.grid().expect("dataset is non-empty")))
    }

    fn exec_tdl(&self) -> Result<Vec<String>> {
        let (distances, grid) = self.test_distances_and_grid()?;
        let dsp = &self.config.dsp;
        let mut out = Vec::new();
        for d in distances {
            let label = distance_label(d);
            let (pdp_m, trend_m) = self.read_pdp(&format!("pdp/measured_{label}.csv"), &grid)?;
            let (pdp_p, _) = self.read_pdp(&format!("pdp/predicted_{label}.csv"), &grid)?;
            for (name, pdp) in [("measured", &pdp_m), ("trend", &trend_m), ("predicted", &pdp_p)] {
                let tdl = tdl_of(pdp, dsp)?;
                out.push(self.write_csv_file(&format!("tdl/{name}_{label}.csv"), |f| io::write_tdl_csv(f, &tdl))?);
            }
        }
        Ok(out)
    }

    fn exec_ber(&self) -> Result<Vec<String>> {
        let (distances, _) = self.test_distances_and_grid()?;
        let cfg = &self.config.ber;
        let mut out = Vec::new();
        for d in distances {
            let tdls = self.read_tdls(d)?;
            let curve = |t: &TdlModel| -> Result<BerCurve> {
                ber::simulate_ber(&ber::tdl_to_fir(t, cfg.symbol_rate, cfg.rng_seed)?, cfg)
            };
            let (m, t, p) = (curve(&tdls.measured)?, curve(&tdls.trend)?, curve(&tdls.predicted)?);
            let rows: Vec<BerRow> = (0..m.points.len())
                .map(|i| BerRow {
                    snr_db: m.points[i].snr_db,
                    bits: m.points[i].bits,
                    errors_measured: m.points[i].bit_errors,
                    ber_measured: m.points[i].ber,
                    errors_trend: t.points[i].bit_errors,
                    ber_trend: t.points[i].ber,
                    errors_predicted: p.points[i].bit_errors,
                    ber_predicted: p.points[i].ber,
                    ber_awgn: ber::bpsk_awgn_ber(m.points[i].snr_db),
                })
                .collect();
            let rel = format!("ber/ber_{}.csv", distance_label(d));
            out.push(self.write_csv_file(&rel, |f| io::write_csv(f, &rows))?);
        }
        Ok(out)
    }

    fn exec_evaluate(&self) -> Result<Vec<String>> {
        let ds = self.dataset()?;
        let grid = *ds.grid().expect("dataset is non-empty");
        let predicted = self.predicted(&grid)?;
        let loss_path = self.require(Stage::Train, "train/loss.csv")?;
        let loss = io::read_loss_csv(io::open(&loss_path)?)?;
        let mut out = Vec::new();
        let mut all_tdls = Vec::new();
        let mut summaries = Vec::new();
        for &d in ds.test_distances_m() {
            let label = distance_label(d);
            let (m, p) = self.record_pair(&ds, &predicted, d)?;
            let tdls = self.read_tdls(d)?;
            let ber_rows = self.read_ber(d)?;
            let mut summary = DistanceSummary::new(&tdls, &m, &p);
            let curve = |pick: fn(&BerRow) -> (u64, f64)| BerCurve {
                points: ber_rows
                    .iter()
                    .map(|r| {
                        let (bit_errors, ber) = pick(r);
                        BerPoint {
                            snr_db: r.snr_db,
                            bit_errors,
                            bits: r.bits,
                            ber,
                        }
                    })
                    .collect(),
            };
            let bm = curve(|r| (r.errors_measured, r.ber_measured));
            let bt = curve(|r| (r.errors_trend, r.ber_trend));
            let bp = curve(|r| (r.errors_predicted, r.ber_predicted));
            summary.ber_log10_gap_trend_vs_predicted = Some(ber::max_log10_gap(&bt, &bp));
            summary.ber_log10_gap_measured_vs_predicted = Some(ber::max_log10_gap(&bm, &bp));
            summaries.push(summary);

            let ctf_rows: Vec<CtfPlotRow> = (0..grid.n_points())
                .map(|k| CtfPlotRow {
                    freq_ghz: grid.frequency(k) * 1e-9,
                    measured_db: m.gain_db()[k],
                    predicted_db: p.gain_db()[k],
                })
                .collect();
            out.push(self.write_csv_file(&format!("evaluate/ctf_{label}.csv"), |f| io::write_csv(f, &ctf_rows))?);

            let (pdp_m, trend_m) = self.read_pdp(&format!("pdp/measured_{label}.csv"), &grid)?;
            let (pdp_p, _) = self.read_pdp(&format!("pdp/predicted_{label}.csv"), &grid)?;
            let pdp_rows: Vec<PdpPlotRow> = (0..pdp_m.len())
                .map(|n| PdpPlotRow {
                    delay_ns: pdp_m.delay_s(n) * 1e9,
                    measured_db: pdp_m.power_db()[n],
                    trend_db: trend_m.power_db()[n],
                    predicted_db: pdp_p.power_db()[n],
                })
                .collect();
            out.push(self.write_csv_file(&format!("evaluate/pdp_{label}.csv"), |f| io::write_csv(f, &pdp_rows))?);

            let tdl_rows: Vec<TdlPlotRow> = [("measured", &tdls.measured), ("trend", &tdls.trend), ("predicted", &tdls.predicted)]
                .into_iter()
                .flat_map(|(model, t)| {
                    t.taps().iter().map(move |tap| TdlPlotRow {
                        model,
                        delay_ns: tap.delay_s * 1e9,
                        power_db: tap.power_db,
                    })
                })
                .collect();
            out.push(self.write_csv_file(&format!("evaluate/tdl_{label}.csv"), |f| io::write_csv(f, &tdl_rows))?);
            out.push(self.write_csv_file(&format!("evaluate/ber_{label}.csv"), |f| io::write_csv(f, &ber_rows))?);
            all_tdls.push(tdls);
        }
        let training = TrainingSummary {
            epochs: loss.len(),
            first_loss_train: loss.first().map(|r| r.loss_train),
            final_loss_train: loss.last().map(|r| r.loss_train),
            final_loss_test: loss.last().map(|r| r.loss_test),
        };
        let report = EvaluationReport::new(
            self.config_hash.clone(),
            self.config.seed,
            &all_tdls,
            summaries,
            Some(training),
            self.config.evaluate.tap_error_threshold,
        );
        io::write_string(&self.path("evaluate/report.json"), &report.to_json())?;
        io::write_string(&self.path("evaluate/report.txt"), &report.render())?;
        out.push("evaluate/report.json".into());
        out.push("evaluate/report.txt".into());
        Ok(out)
    }

    // ---- tuning (outside the run graph) ----

    /// Grid search on the synthesized dataset. Each finished training run is
    /// cached under `tune/runs/`, so an interrupted search resumes where it
    /// stopped. Writes `tune/results.csv` and `tune/selected.json`.
    pub fn tune(&self, jobs: usize) -> Result<TuneResult> {
        let stamp = self.valid_stamp(Stage::Synth)?.ok_or_else(|| Error::MissingArtifact {
            stage: "synth",
            path: self.stamp_path(Stage::Synth),
        })?;
        let ds = self.dataset()?;
        let runs = self.dir.join("tune").join("runs");
        fs::create_dir_all(&runs).map_err(|e| Error::File {
            path: runs.clone(),
            source: e,
        })?;
        let trainer = CachingTrainer {
            dir: runs,
            dataset_digest: serde_json::to_string(&stamp.outputs)?,
            inner: LstmTrainer,
        };
        let jobs = if jobs == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            jobs
        };
        let result = tune::tune_with(&trainer, &ds, &self.config.tune_grid(), jobs)?;
        self.write_csv_file("tune/results.csv", |f| io::write_csv(f, &result.records))?;
        let selected = serde_json::to_string_pretty(&result.selected)? + "\n";
        io::write_string(&self.path("tune/selected.json"), &selected)?;
        Ok(result)
    }
}

struct CachingTrainer<T: Trainer> {
    dir: PathBuf,
    dataset_digest: String,
    inner: T,
}

impl<T: Trainer> Trainer for CachingTrainer<T> {
    fn history(&self, dataset: &ChannelDataset, arch: &Architecture, config: &TrainConfig) -> Result<LossHistory> {
        let key = json!({ "dataset": self.dataset_digest, "model": arch, "train": config });
        let path = self.dir.join(format!("{}.csv", &sha256_hex(key.to_string().as_bytes())[..16]));
        if path.exists() {
            let rows = io::read_loss_csv(io::open(&path)?)?;
            if rows.len() == config.epochs {
                return Ok(LossHistory {
                    loss_train: rows.iter().map(|r| r.loss_train).collect(),
                    loss_test: rows.iter().map(|r| r.loss_test).collect(),
                });
            }
        }
        let h = self.inner.history(dataset, arch, config)?;
        let tmp = path.with_extension("csv.tmp");
        let file = fs::File::create(&tmp).map_err(|e| Error::File {
            path: tmp.clone(),
            source: e,
        })?;
        io::write_loss_csv(file, &h.loss_train, &h.loss_test)?;
        fs::rename(&tmp, &path).map_err(|e| Error::File { path, source: e })?;
        Ok(h)
    }
}

/// Runs every stage, skipping those already current.
pub fn run_pipeline(config: ExperimentConfig) -> Result<Vec<StageOutcome>> {
    Pipeline::open(config)?.run()
}

/// Brings the evaluate stage up to date from existing upstream artifacts and
/// returns the report. Fails with the name of the first missing stage.
pub fn run_evaluate(config: ExperimentConfig) -> Result<EvaluationReport> {
    let p = Pipeline::open(config)?;
    p.ensure(Stage::Evaluate)?;
    p.report()
}
