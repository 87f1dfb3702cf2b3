//! In-memory evaluation: profiles, TDLs, the comparison table and its text
//! rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::DspConfig;
use crate::dsp::{self, PhaseSource};
use crate::error::Result;
use crate::metrics;
use crate::model::{CtfRecord, Pdp, TdlModel};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Peak-normalized PDP of a record (minimum-phase CIR) and its trend.
pub fn profiles(record: &CtfRecord, dsp_config: &DspConfig) -> Result<(Pdp, Pdp)> {
    let cir = dsp::record_to_cir(record, PhaseSource::MinimumPhase, dsp_config.window_spec())?;
    let pdp = dsp::cir_to_pdp(&cir, dsp_config.floor_db)?;
    let trend = dsp::extract_trend(&pdp, dsp_config.trend_bins)?;
    Ok((pdp, trend))
}

pub fn tdl_of(pdp: &Pdp, dsp_config: &DspConfig) -> Result<TdlModel> {
    dsp::extract_tdl(pdp, dsp_config.tdl_bin_s(), dsp_config.tdl_threshold_db)
}

/// The three TDL models compared at one distance.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTdls {
    pub distance_m: f64,
    pub measured: TdlModel,
    pub trend: TdlModel,
    pub predicted: TdlModel,
}

impl DistanceTdls {
    /// Profiles and TDLs straight from the measured and predicted CTFs.
    pub fn from_records(measured: &CtfRecord, predicted: &CtfRecord, dsp_config: &DspConfig) -> Result<Self> {
        let (pdp_m, trend_m) = profiles(measured, dsp_config)?;
        let (pdp_p, _) = profiles(predicted, dsp_config)?;
        Ok(DistanceTdls {
            distance_m: measured.distance_m(),
            measured: tdl_of(&pdp_m, dsp_config)?,
            trend: tdl_of(&trend_m, dsp_config)?,
            predicted: tdl_of(&pdp_p, dsp_config)?,
        })
    }
}

/// RMSE (dB) and R² of a candidate against a reference on aligned taps.
/// `None` marks an undefined value, e.g. R² of a constant reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub distance_m: f64,
    pub rmse_db: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub reference: String,
    pub candidate: String,
    pub values: Vec<MetricPair>,
}

pub fn compare_taps(distance_m: f64, reference: &TdlModel, candidate: &TdlModel) -> MetricPair {
    match metrics::aligned_tap_powers(reference, candidate) {
        Ok((r, c)) => MetricPair {
            distance_m,
            rmse_db: metrics::rmse(&r, &c).ok(),
            r_squared: metrics::r_squared(&r, &c).ok(),
        },
        Err(_) => MetricPair {
            distance_m,
            rmse_db: None,
            r_squared: None,
        },
    }
}

/// Rows measured-vs-trend, measured-vs-predicted, trend-vs-predicted; one
/// column per distance.
pub fn comparison_table(per_distance: &[DistanceTdls]) -> Vec<ComparisonRow> {
    type Pick = fn(&DistanceTdls) -> &TdlModel;
    let rows: [(&str, Pick, &str, Pick); 3] = [
        ("measured", |t| &t.measured, "trend", |t| &t.trend),
        ("measured", |t| &t.measured, "predicted", |t| &t.predicted),
        ("trend", |t| &t.trend, "predicted", |t| &t.predicted),
    ];
    rows.iter()
        .map(|(rn, r, cn, c)| ComparisonRow {
            reference: rn.to_string(),
            candidate: cn.to_string(),
            values: per_distance
                .iter()
                .map(|t| compare_taps(t.distance_m, r(t), c(t)))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpreads {
    pub measured_ns: Option<f64>,
    pub trend_ns: Option<f64>,
    pub predicted_ns: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapCounts {
    pub measured: usize,
    pub trend: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub distance_m: f64,
    pub tap_error_trend_vs_predicted: Option<f64>,
    pub tap_error_measured_vs_predicted: Option<f64>,
    pub taps: TapCounts,
    pub rms_delay_spread: DelaySpreads,
    /// Measured-vs-predicted CTF gain over the grid.
    pub ctf_rmse_db: Option<f64>,
    pub ctf_r_squared: Option<f64>,
    pub ber_log10_gap_trend_vs_predicted: Option<f64>,
    pub ber_log10_gap_measured_vs_predicted: Option<f64>,
}

impl DistanceSummary {
    pub fn new(tdls: &DistanceTdls, measured: &CtfRecord, predicted: &CtfRecord) -> Self {
        let spread = |t: &TdlModel| dsp::rms_delay_spread(t).ok().map(|s| s * 1e9);
        DistanceSummary {
            distance_m: tdls.distance_m,
            tap_error_trend_vs_predicted: metrics::average_tap_error(&tdls.trend, &tdls.predicted).ok(),
            tap_error_measured_vs_predicted: metrics::average_tap_error(&tdls.measured, &tdls.predicted).ok(),
            taps: TapCounts {
                measured: tdls.measured.len(),
                trend: tdls.trend.len(),
                predicted: tdls.predicted.len(),
            },
            rms_delay_spread: DelaySpreads {
                measured_ns: spread(&tdls.measured),
                trend_ns: spread(&tdls.trend),
                predicted_ns: spread(&tdls.predicted),
            },
            ctf_rmse_db: metrics::rmse(measured.gain_db(), predicted.gain_db()).ok(),
            ctf_r_squared: metrics::r_squared(measured.gain_db(), predicted.gain_db()).ok(),
            ber_log10_gap_trend_vs_predicted: None,
            ber_log10_gap_measured_vs_predicted: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub first_loss_train: Option<f64>,
    pub final_loss_train: Option<f64>,
    pub final_loss_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub table: Vec<ComparisonRow>,
    pub distances: Vec<DistanceSummary>,
    pub training: Option<TrainingSummary>,
    pub tap_error_threshold: f64,
    /// Trend-vs-predicted tap error within the threshold at every distance.
    pub tap_error_pass: bool,
}

impl EvaluationReport {
    pub fn new(
        config_hash: String,
        seed: Option<u64>,
        per_distance: &[DistanceTdls],
        distances: Vec<DistanceSummary>,
        training: Option<TrainingSummary>,
        tap_error_threshold: f64,
    ) -> Self {
        let tap_error_pass = !distances.is_empty()
            && distances
                .iter()
                .all(|d| d.tap_error_trend_vs_predicted.is_some_and(|e| e <= tap_error_threshold));
        EvaluationReport {
            format_version: REPORT_FORMAT_VERSION,
            config_hash,
            seed,
            table: comparison_table(per_distance),
            distances,
            training,
            tap_error_threshold,
            tap_error_pass,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text rendering of the comparison table and per-distance checks.
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| match v {
            Some(x) => format!("{x:.prec$}"),
            None => "n/a".to_string(),
        };
        let mut out = String::new();
        let _ = write!(out, "{:<24}", "tap powers");
        for d in &self.distances {
            let _ = write!(out, " | {:>18}", format!("{} m", d.distance_m));
        }
        out.push('\n');
        let _ = write!(out, "{:<24}", "");
        for _ in &self.distances {
            let _ = write!(out, " | {:>9} {:>8}", "RMSE dB", "R^2");
        }
        out.push('\n');
        for row in &self.table {
            let _ = write!(out, "{:<24}", format!("{} vs {}", row.reference, row.candidate));
            for v in &row.values {
                let _ = write!(out, " | {:>9} {:>8}", fmt(v.rmse_db, 3), fmt(v.r_squared, 3));
            }
            out.push('\n');
        }
        out.push('\n');
        for d in &self.distances {
            let _ = writeln!(
                out,
                "{} m: tap error trend vs predicted {} (measured vs predicted {}), taps {}/{}/{}, \
                 rms delay spread {}/{}/{} ns, BER gap {} decades",
                d.distance_m,
                fmt(d.tap_error_trend_vs_predicted, 4),
                fmt(d.tap_error_measured_vs_predicted, 4),
                d.taps.measured,
                d.taps.trend,
                d.taps.predicted,
                fmt(d.rms_delay_spread.measured_ns, 2),
                fmt(d.rms_delay_spread.trend_ns, 2),
                fmt(d.rms_delay_spread.predicted_ns, 2),
                fmt(d.ber_log10_gap_trend_vs_predicted, 3),
            );
        }
        let _ = writeln!(
            out,
            "tap error threshold {}: {}",
            self.tap_error_threshold,
            if self.tap_error_pass { "PASS" } else { "FAIL" }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FrequencyGrid;
    use crate::synth::{generate_ctf, SynthParams};

    #[test]
    fn oracle_prediction_scores_perfectly() {
        let grid = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let measured = generate_ctf(3.7, &grid, &SynthParams::default()).unwrap().magnitude_only();
        let predicted = measured.clone();
        let cfg = DspConfig::default();
        let tdls = DistanceTdls::from_records(&measured, &predicted, &cfg).unwrap();
        let table = comparison_table(std::slice::from_ref(&tdls));
        assert_eq!(table.len(), 3);
        let row = &table[1];
        assert_eq!((row.reference.as_str(), row.candidate.as_str()), ("measured", "predicted"));
        assert_eq!(row.values[0].rmse_db, Some(0.0));
        assert_eq!(row.values[0].r_squared, Some(1.0));
        let summary = DistanceSummary::new(&tdls, &measured, &predicted);
        assert_eq!(summary.tap_error_measured_vs_predicted, Some(0.0));
        assert_eq!(summary.ctf_rmse_db, Some(0.0));
    }

    #[test]
    fn table_has_three_rows_by_distance_columns() {
        let grid = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let params = SynthParams::default();
        let cfg = DspConfig::default();
        let tdls: Vec<DistanceTdls> = [3.7, 9.75]
            .iter()
            .map(|&d| {
                let m = generate_ctf(d, &grid, &params).unwrap();
                let p = generate_ctf(d + 0.01, &grid, &params).unwrap();
                let p = CtfRecord::new(d, grid, p.gain_db().to_vec()).unwrap();
                DistanceTdls::from_records(&m, &p, &cfg).unwrap()
            })
            .collect();
        let table = comparison_table(&tdls);
        let names: Vec<_> = table.iter().map(|r| format!("{}/{}", r.reference, r.candidate)).collect();
        assert_eq!(names, ["measured/trend", "measured/predicted", "trend/predicted"]);
        assert!(table.iter().all(|r| r.values.len() == 2));
        assert_eq!(table[0].values[1].distance_m, 9.75);
    }
}
