//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Lines are written straight to stdout (not through `println!`) so they
//! appear even when the harness captures output.

use std::io::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use cabinwave::ber::{self, BerConfig, Equalizer};
use cabinwave::dsp::{self, PhaseSource, WindowSpec};
use cabinwave::model::{ChannelDataset, CtfRecord, FrequencyGrid};
use cabinwave::neural::{self, Activation, Architecture, LstmLayerParams, TrainConfig, Weights, INPUT_SIZE};
use cabinwave::pipeline::{EvaluationReport, ExperimentConfig, Pipeline};
use cabinwave::rng;
use cabinwave::tune::{self, LossHistory, TuneGrid, Trainer};
use cabinwave::Result;
use ndarray::{array, Array1, Array2};
use num_complex::Complex64;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "[acceptance] criterion {id:>2} {name}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn random_weights(arch: &Architecture, seed: u64) -> Weights {
    let mut r = rng::stream(seed);
    let mut w = Weights::zeros(arch);
    for t in w.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng::uniform_in(&mut r, -0.9, 0.9);
        }
    }
    w
}

fn mse(w: &Weights, act: Activation, xs: &[Array2<f64>], t: &Array1<f64>) -> f64 {
    let y = neural::forward_batch(w, act, xs);
    (&y - t).iter().map(|e| e * e).sum::<f64>() / t.len() as f64
}

#[test]
fn criterion_01_gradient_oracle() {
    let start = Instant::now();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut models = 0;
    for seed in 0..10u64 {
        for act in [Activation::Relu, Activation::Tanh] {
            let arch = Architecture { layer1: 3, layer2: 2, activation: act };
            let w = random_weights(&arch, seed);
            let mut r = rng::stream(seed ^ 0xDA7A);
            let xs: Vec<Array2<f64>> = (0..4)
                .map(|_| Array2::from_shape_fn((3, INPUT_SIZE), |_| rng::uniform_in(&mut r, 0.0, 1.0)))
                .collect();
            let t = Array1::from_shape_fn(3, |_| rng::uniform_in(&mut r, -1.0, 1.0));
            let (_, g) = neural::backward(&w, act, &xs, &t).unwrap();
            // Relative error of a tensor: largest absolute deviation over the
            // largest gradient magnitude in that tensor.
            for ti in 0..Weights::tensor_names().len() {
                let analytic = g.tensors()[ti].to_vec();
                let (mut dev, mut scale) = (0.0f64, 0.0f64);
                for (k, a) in analytic.iter().enumerate() {
                    let mut plus = w.clone();
                    plus.tensors_mut()[ti][k] += eps;
                    let mut minus = w.clone();
                    minus.tensors_mut()[ti][k] -= eps;
                    let numeric = (mse(&plus, act, &xs, &t) - mse(&minus, act, &xs, &t)) / (2.0 * eps);
                    dev = dev.max((numeric - a).abs());
                    scale = scale.max(numeric.abs()).max(a.abs());
                }
                if scale > 0.0 {
                    worst = worst.max(dev / scale);
                }
            }
            models += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-5 && secs < 30.0;
    verdict(1, "BPTT vs central differences", pass, &format!("{models} models, max rel err {worst:.2e}, {secs:.1} s"));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_cell_hand_oracle() {
    let p = LstmLayerParams {
        w: Array2::ones((4, 1)),
        u: Array2::ones((4, 1)),
        b: Array1::zeros(4),
    };
    let zero = Array1::zeros(1);
    let (h, c) = p.cell_step(Activation::Relu, array![1.0].view(), zero.view(), zero.view()).unwrap();
    let sigma1 = 1.0 / (1.0 + (-1.0f64).exp());
    let want_c = sigma1 * 1.0;
    let want_h = sigma1 * want_c.max(0.0);
    let pass = (h[0] - 0.534447).abs() < 1e-6 && (h[0] - want_h).abs() < 1e-12 && (c[0] - want_c).abs() < 1e-12;
    verdict(2, "scalar LSTM cell", pass, &format!("h = {:.9}, c = {:.9}", h[0], c[0]));
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_dft_suite() {
    let start = Instant::now();
    let grid = FrequencyGrid::cabin_default();
    let n = grid.n_points();
    assert_eq!(n, 1001);
    let mut r = rng::stream(3);
    let h: Vec<Complex64> = (0..n).map(|_| rng::complex_gaussian(&mut r, 1.0)).collect();
    let cir = dsp::ctf_to_cir(&h, &grid, WindowSpec::RECTANGULAR).unwrap();
    let back = dsp::cir_to_ctf(&cir);
    let norm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
    let diff: Vec<Complex64> = back.iter().zip(&h).map(|(a, b)| a - b).collect();
    let round_trip = (norm(&diff) / norm(&h)).sqrt();

    let parseval = (norm(cir.taps()) - norm(&h) / n as f64).abs() / norm(cir.taps());

    // Direct O(N^2) inverse DFT as an independent reference.
    let direct_err = (0..n)
        .step_by(50)
        .map(|m| {
            let s: Complex64 = (0..n)
                .map(|k| h[k] * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k * m % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64;
            (s - cir.taps()[m]).norm()
        })
        .fold(0.0, f64::max);

    let m0 = 137usize;
    let shifted: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (k * m0 % n) as f64 / n as f64))
        .collect();
    let delta = dsp::ctf_to_cir(&shifted, &grid, WindowSpec::RECTANGULAR).unwrap();
    let shift_err = delta
        .taps()
        .iter()
        .enumerate()
        .map(|(i, x)| (x - if i == m0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).norm())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = round_trip < 1e-9 && parseval < 1e-9 && shift_err < 1e-12 && direct_err < 1e-9 && secs < 10.0;
    verdict(
        3,
        "DFT round trip, Parseval, shift",
        pass,
        &format!(
            "N = {n}, round trip {round_trip:.1e}, Parseval {parseval:.1e}, shift {shift_err:.1e}, direct {direct_err:.1e}, {secs:.2} s"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_minimum_phase_oracle() {
    let grid = FrequencyGrid::cabin_default();
    let n = grid.n_points();
    let omega = |k: usize| std::f64::consts::PI * k as f64 / (n - 1) as f64;
    let response = |k: usize| 1.0 + 0.5 * Complex64::from_polar(1.0, -omega(k));
    let gain_db: Vec<f64> = (0..n).map(|k| 20.0 * response(k).norm().log10()).collect();
    let h = dsp::minimum_phase_reconstruct(&gain_db, &grid).unwrap();
    let worst = (1..n - 1)
        .map(|k| {
            let d = h[k].arg() - response(k).arg();
            (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
        })
        .map(f64::abs)
        .fold(0.0, f64::max);
    let pass = worst < 1e-6;
    verdict(4, "minimum phase of |1 + 0.5 z^-1|", pass, &format!("max interior phase error {worst:.2e} rad"));
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_tdl_round_trip() {
    let grid = FrequencyGrid::cabin_default();
    let taps = [(0.0, 0.0), (20e-9, -8.0), (45e-9, -15.0)];
    let ctf: Vec<Complex64> = grid
        .frequencies()
        .map(|f| {
            taps.iter()
                .map(|&(tau, p_db): &(f64, f64)| {
                    let a = 10f64.powf(p_db / 20.0);
                    Complex64::from_polar(a, -2.0 * std::f64::consts::PI * f * tau)
                })
                .sum()
        })
        .collect();
    let record = CtfRecord::from_complex(1.0, grid, ctf).unwrap();
    let bin = 1e-9;
    let mut worst_delay: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    let mut detail = String::new();
    for window in [WindowSpec::RECTANGULAR, WindowSpec::HANN] {
        let cir = dsp::record_to_cir(&record, PhaseSource::Measured, window).unwrap();
        let pdp = dsp::cir_to_pdp(&cir, -80.0).unwrap();
        let tdl = dsp::extract_tdl(&pdp, bin, 25.0).unwrap();
        let peak = tdl.peak_db().unwrap();
        for &(tau, p_db) in &taps {
            let nearest = tdl
                .taps()
                .iter()
                .min_by(|a, b| (a.delay_s - tau).abs().total_cmp(&(b.delay_s - tau).abs()))
                .unwrap();
            worst_delay = worst_delay.max((nearest.delay_s - tau).abs() / bin);
            worst_power = worst_power.max((nearest.power_db - peak - p_db).abs());
        }
        detail.push_str(&format!("{:?}: {} taps; ", window.kind, tdl.len()));
    }
    let pass = worst_delay <= 1.0 && worst_power <= 0.5;
    verdict(
        5,
        "CTF -> CIR -> PDP -> TDL recovery",
        pass,
        &format!("{detail}max delay error {worst_delay:.2} bins, max power error {worst_power:.3} dB"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_ber_oracle() {
    let start = Instant::now();
    let cfg = BerConfig {
        snr_db_points: (0..=5).map(|k| 2.0 * k as f64).collect(),
        symbols_per_point: 1_000_000,
        equalizer: Equalizer::None,
        ..BerConfig::default()
    };
    let curve = ber::simulate_ber(&[Complex64::new(1.0, 0.0)], &cfg).unwrap();
    let mut pass = true;
    let mut worst_sigma: f64 = 0.0;
    let mut checked = 0;
    for p in &curve.points {
        let q = ber::bpsk_awgn_ber(p.snr_db);
        if q < 1e-4 {
            continue;
        }
        let sigma = (q * (1.0 - q) / p.bits as f64).sqrt();
        let z = (p.ber - q).abs() / sigma;
        worst_sigma = worst_sigma.max(z);
        pass &= z <= 3.0;
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    verdict(
        6,
        "single-tap BPSK vs Q(sqrt(2 snr))",
        pass,
        &format!("{checked} points with BER >= 1e-4, worst deviation {worst_sigma:.2} sigma, {secs:.1} s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

/// Acceptance grid: 251 points over 2.5 GHz (100 ns unaliased delay span).
fn acceptance_grid() -> FrequencyGrid {
    FrequencyGrid::new(55.0e9, 57.5e9, 10e6).unwrap()
}

fn run_report(config: ExperimentConfig) -> EvaluationReport {
    let pipeline = Pipeline::open(config).unwrap();
    pipeline.run().unwrap();
    pipeline.report().unwrap()
}

struct DefaultRun {
    report: EvaluationReport,
    secs: f64,
}

/// Default dataset, default 100/9 model, 94 epochs, batch 20, on the
/// acceptance grid. Shared by criterion 7 and the training-progress line.
fn default_run() -> &'static DefaultRun {
    static RUN: OnceLock<DefaultRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::default();
        config.grid = acceptance_grid();
        config.out_dir = dir.path().join("run");
        config.ber.symbols_per_point = 200_000;
        let start = Instant::now();
        let report = run_report(config);
        DefaultRun {
            report,
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_07_tap_error_on_default_synthetic_data() {
    let run = default_run();
    let errors: Vec<(f64, Option<f64>)> = run
        .report
        .distances
        .iter()
        .map(|d| (d.distance_m, d.tap_error_trend_vs_predicted))
        .collect();
    let pass = errors.len() == 2 && errors.iter().all(|(_, e)| e.is_some_and(|e| e <= 0.15)) && run.secs < 900.0;
    let detail: Vec<String> = errors
        .iter()
        .map(|(d, e)| format!("{d} m: {}", e.map_or("n/a".into(), |e| format!("{e:.4}"))))
        .collect();
    verdict(
        7,
        "average tap error (trend vs predicted) <= 0.15",
        pass,
        &format!("{}, pipeline {:.0} s", detail.join(", "), run.secs),
    );
    assert!(pass);
}

#[test]
fn training_progress_on_default_run() {
    let t = default_run().report.training.expect("training summary");
    let (first, last) = (t.first_loss_train.unwrap(), t.final_loss_train.unwrap());
    let line = format!(
        "[acceptance] info: training loss epoch 1 {first:.4} -> epoch {} {last:.4} (ratio {:.3}; reference example expects < 0.2)\n",
        t.epochs,
        last / first
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(last < first);
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_table_structure_and_ordering() {
    let seeds = [1u64, 2, 3];
    let mut holds = 0;
    let mut structure_ok = true;
    let mut detail = Vec::new();
    for seed in seeds {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ExperimentConfig::default();
        config.grid = acceptance_grid();
        config.out_dir = dir.path().join("run");
        config.train.epochs = 30;
        config.ber.symbols_per_point = 50_000;
        config.set_seed(seed);
        let report = run_report(config);
        let rows: Vec<(&str, &str)> = report
            .table
            .iter()
            .map(|r| (r.reference.as_str(), r.candidate.as_str()))
            .collect();
        structure_ok &= rows == [("measured", "trend"), ("measured", "predicted"), ("trend", "predicted")]
            && report.table.iter().all(|r| {
                r.values.len() == 2 && r.values.iter().all(|v| v.rmse_db.is_some() && v.r_squared.is_some())
            });
        let r2 = |row: usize, col: usize| report.table[row].values[col].r_squared.unwrap_or(f64::NAN);
        let ok = (0..2).all(|c| r2(0, c) > r2(1, c));
        holds += ok as usize;
        detail.push(format!(
            "seed {seed}: R2 m-t {:.2}/{:.2} vs m-p {:.2}/{:.2}",
            r2(0, 0),
            r2(0, 1),
            r2(1, 0),
            r2(1, 1)
        ));
    }
    let pass = structure_ok && holds * 2 > seeds.len();
    verdict(
        8,
        "six RMSE/R2 pairs; R2(measured, trend) > R2(measured, predicted)",
        pass,
        &format!("structure {}, ordering holds for {holds}/3 seeds; {}", if structure_ok { "ok" } else { "bad" }, detail.join("; ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

struct Bowl;

impl Trainer for Bowl {
    fn history(&self, _: &ChannelDataset, arch: &Architecture, config: &TrainConfig) -> Result<LossHistory> {
        let f = |e: usize| {
            (arch.layer1 as f64 - 60.0).powi(2) + (arch.layer2 as f64 - 5.0).powi(2) + (e as f64 - 50.0).powi(2)
        };
        Ok(LossHistory {
            loss_train: (1..=config.epochs).map(|e| 0.5 * f(e)).collect(),
            loss_test: (1..=config.epochs).map(|e| 0.5 * f(e)).collect(),
        })
    }
}

struct Flat;

impl Trainer for Flat {
    fn history(&self, _: &ChannelDataset, _: &Architecture, config: &TrainConfig) -> Result<LossHistory> {
        Ok(LossHistory {
            loss_train: vec![0.3; config.epochs],
            loss_test: vec![0.4; config.epochs],
        })
    }
}

#[test]
fn criterion_09_tuner_selection() {
    let start = Instant::now();
    let grid = FrequencyGrid::new(55e9, 55.1e9, 10e6).unwrap();
    let rec = |d: f64| CtfRecord::new(d, grid, vec![-70.0 - d; grid.n_points()]).unwrap();
    let ds = ChannelDataset::new(vec![rec(1.0), rec(2.0)], vec![1.0], vec![2.0]).unwrap();

    let full = TuneGrid {
        epoch_candidates: vec![25, 50, 75, 100, 125],
        ..TuneGrid::default()
    };
    let a = tune::tune_with(&Bowl, &ds, &full, 2).unwrap().selected.unwrap();
    let degenerate = TuneGrid {
        layer1_values: vec![100],
        layer2_values: vec![9],
        epoch_candidates: vec![94],
        ..TuneGrid::default()
    };
    let b = tune::tune_with(&Flat, &ds, &degenerate, 1).unwrap().selected.unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (a.layer1, a.layer2, a.epochs) == (60, 5, 50) && (b.layer1, b.layer2, b.epochs) == (100, 9, 94) && secs < 5.0;
    verdict(
        9,
        "grid search argmin and degenerate grid",
        pass,
        &format!(
            "bowl -> ({}, {}, {}), degenerate -> ({}, {}, {}), {secs:.2} s",
            a.layer1, a.layer2, a.epochs, b.layer1, b.layer2, b.epochs
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_deterministic_runs() {
    let text = r#"
version = 1
seed = 2024
out_dir = "run"

[grid]
f_start = 55.0e9
f_stop = 57.5e9
f_step = 10.0e6

[model]
layer1 = 20
layer2 = 4

[train]
epochs = 4

[ber]
symbols_per_point = 50000
"#;
    let reports: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let config = ExperimentConfig::from_toml_str(text, dir.path()).unwrap();
            Pipeline::open(config).unwrap().run().unwrap();
            std::fs::read(dir.path().join("run/evaluate/report.json")).unwrap()
        })
        .collect();
    let pass = !reports[0].is_empty() && reports[0] == reports[1];
    verdict(
        10,
        "byte-identical report.json across runs",
        pass,
        &format!("{} bytes each", reports[0].len()),
    );
    assert!(pass);
}
