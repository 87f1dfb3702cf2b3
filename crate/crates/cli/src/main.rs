mod standalone;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cabinwave::ber::Equalizer;
use cabinwave::dsp::{TrendSpec, WindowKind};
use cabinwave::neural::Activation;
use cabinwave::pipeline::{ExperimentConfig, Pipeline, Stage};
use cabinwave::{Error, Result};

#[derive(Parser)]
#[command(name = "cabinwave", version, about = "Synthetic in-cabin 60 GHz channels, LSTM CTF prediction, PDP/TDL analysis and BER")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Pipeline directory; overrides `out_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Global seed for the synth, train and BER streams.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic CTF dataset.
    Synth,
    /// Train the LSTM on the dataset.
    Train(TrainArgs),
    /// Grid search over layer sizes and epoch counts.
    Tune(TuneArgs),
    /// Predict CTFs at the test distances, or at `--distance` values.
    Predict(PredictArgs),
    /// Power delay profiles and trends.
    Pdp(PdpArgs),
    /// Tapped delay line models from the profiles.
    Tdl(TdlArgs),
    /// Monte Carlo BER of the TDL models.
    Ber(BerArgs),
    /// Comparison report over the existing artifacts.
    Evaluate(EvaluateArgs),
    /// Every stage from synth to evaluate, skipping current ones.
    Run(EvaluateArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    shuffle: bool,
    #[arg(long)]
    layer1: Option<usize>,
    #[arg(long)]
    layer2: Option<usize>,
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Args)]
struct TuneArgs {
    /// First-layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    layer1: Vec<usize>,
    /// Second-layer sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    layer2: Vec<usize>,
    /// Epoch candidates, comma separated.
    #[arg(long, value_delimiter = ',')]
    epochs: Vec<usize>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Distances in metres; without this the test distances are predicted
    /// into the pipeline directory.
    #[arg(long, value_delimiter = ',')]
    distance: Vec<f64>,
    /// Model file (default: the pipeline's trained model).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output CTF CSV for `--distance` predictions (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DspArgs {
    #[arg(long)]
    window: Option<WindowKind>,
    #[arg(long)]
    trend_bins: Option<usize>,
    #[arg(long)]
    tdl_bin_ns: Option<f64>,
    #[arg(long)]
    tdl_threshold_db: Option<f64>,
    #[arg(long)]
    floor_db: Option<f64>,
}

#[derive(Args)]
struct PdpArgs {
    /// CTF CSV to process instead of the pipeline's records; writes
    /// `pdp_<distance>m.csv` into `--out`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    dsp: DspArgs,
}

#[derive(Args)]
struct TdlArgs {
    /// PDP CSV to process instead of the pipeline's profiles; writes
    /// `<stem>_tdl.csv` and `<stem>_trend_tdl.csv` into `--out`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    dsp: DspArgs,
}

#[derive(Args)]
struct BerArgs {
    /// TDL CSV(s) to simulate instead of the pipeline's models; writes
    /// `<stem>_ber.csv` into `--out`.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Eb/N0 points in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Vec<f64>,
    /// Bits per SNR point.
    #[arg(long)]
    bits: Option<u64>,
    #[arg(long)]
    equalizer: Option<Equalizer>,
    #[arg(long)]
    equalizer_taps: Option<usize>,
    #[arg(long)]
    symbol_rate: Option<f64>,
    /// TDL threshold used when reading `--input` files.
    #[arg(long)]
    tdl_threshold_db: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Exit with status 3 when the tap-error check fails.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    tap_error_threshold: Option<f64>,
}

enum Status {
    Ok,
    ThresholdFailed,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    Ok(config)
}

fn apply_dsp(config: &mut ExperimentConfig, a: &DspArgs) -> Result<()> {
    let d = &mut config.dsp;
    if let Some(w) = a.window {
        d.window = w;
    }
    if let Some(n) = a.trend_bins {
        d.trend_bins = TrendSpec::new(n)?;
    }
    if let Some(v) = a.tdl_bin_ns {
        d.tdl_bin_ns = v;
    }
    if let Some(v) = a.tdl_threshold_db {
        d.tdl_threshold_db = v;
    }
    if let Some(v) = a.floor_db {
        d.floor_db = v;
    }
    Ok(())
}

fn run_stage(pipeline: &Pipeline, stage: Stage) -> Result<()> {
    let start = Instant::now();
    let executed = pipeline.ensure(stage)?;
    if executed {
        eprintln!("{:<9} done in {:.1} s", stage.name(), start.elapsed().as_secs_f64());
    } else {
        eprintln!("{:<9} up to date", stage.name());
    }
    Ok(())
}

fn finish_evaluate(pipeline: &Pipeline, strict: bool) -> Result<Status> {
    let report = pipeline.report()?;
    print!("{}", report.render());
    println!("report: {}", pipeline.dir().join("evaluate/report.json").display());
    Ok(if strict && !report.tap_error_pass {
        Status::ThresholdFailed
    } else {
        Status::Ok
    })
}

fn run(cli: Cli) -> Result<Status> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Synth => run_stage(&Pipeline::open(config)?, Stage::Synth)?,
        Command::Train(a) => {
            let t = &mut config.train;
            if let Some(v) = a.epochs {
                t.epochs = v;
            }
            if let Some(v) = a.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = a.learning_rate {
                t.learning_rate = v;
            }
            if let Some(v) = a.window_len {
                t.window_len = v;
            }
            t.shuffle |= a.shuffle;
            if let Some(v) = a.layer1 {
                config.model.layer1 = v;
            }
            if let Some(v) = a.layer2 {
                config.model.layer2 = v;
            }
            if let Some(v) = a.activation {
                config.model.activation = v;
            }
            run_stage(&Pipeline::open(config)?, Stage::Train)?;
        }
        Command::Tune(a) => {
            let t = &mut config.tune;
            if !a.layer1.is_empty() {
                t.layer1_values = a.layer1;
            }
            if !a.layer2.is_empty() {
                t.layer2_values = a.layer2;
            }
            if !a.epochs.is_empty() {
                t.epoch_candidates = a.epochs;
            }
            let jobs = a.jobs.unwrap_or(t.jobs);
            let pipeline = Pipeline::open(config)?;
            let result = pipeline.tune(jobs)?;
            eprintln!(
                "tune      {} candidates in {:.1} s",
                result.records.len(),
                result.wall_time_s
            );
            match result.selected {
                Some(s) => println!(
                    "selected layer1={} layer2={} epochs={} score={:.6} (train {:.6}, test {:.6})",
                    s.layer1, s.layer2, s.epochs, s.score, s.loss_train, s.loss_test
                ),
                None => {
                    return Err(Error::Validation("every tuning candidate failed".into()));
                }
            }
            println!("results: {}", pipeline.dir().join("tune/results.csv").display());
        }
        Command::Predict(a) => {
            if a.distance.is_empty() {
                run_stage(&Pipeline::open(config)?, Stage::Predict)?;
            } else {
                standalone::predict(&config, &a.distance, a.model.as_deref(), a.output.as_deref())?;
            }
        }
        Command::Pdp(a) => {
            apply_dsp(&mut config, &a.dsp)?;
            match a.input {
                Some(input) => standalone::pdp(&config, &input, cli.out.as_deref())?,
                None => run_stage(&Pipeline::open(config)?, Stage::Pdp)?,
            }
        }
        Command::Tdl(a) => {
            apply_dsp(&mut config, &a.dsp)?;
            match a.input {
                Some(input) => standalone::tdl(&config, &input, cli.out.as_deref())?,
                None => run_stage(&Pipeline::open(config)?, Stage::Tdl)?,
            }
        }
        Command::Ber(a) => {
            let b = &mut config.ber;
            if !a.snr.is_empty() {
                b.snr_db_points = a.snr;
            }
            if let Some(v) = a.bits {
                b.symbols_per_point = v;
            }
            if let Some(v) = a.equalizer {
                b.equalizer = v;
            }
            if let Some(v) = a.equalizer_taps {
                b.equalizer_taps = v;
            }
            if let Some(v) = a.symbol_rate {
                b.symbol_rate = v;
            }
            if let Some(v) = a.tdl_threshold_db {
                config.dsp.tdl_threshold_db = v;
            }
            if a.input.is_empty() {
                run_stage(&Pipeline::open(config)?, Stage::Ber)?;
            } else {
                standalone::ber(&config, &a.input, cli.out.as_deref())?;
            }
        }
        Command::Evaluate(a) => {
            if let Some(t) = a.tap_error_threshold {
                config.evaluate.tap_error_threshold = t;
            }
            let pipeline = Pipeline::open(config)?;
            run_stage(&pipeline, Stage::Evaluate)?;
            return finish_evaluate(&pipeline, a.strict);
        }
        Command::Run(a) => {
            if let Some(t) = a.tap_error_threshold {
                config.evaluate.tap_error_threshold = t;
            }
            let pipeline = Pipeline::open(config)?;
            for stage in Stage::ALL {
                run_stage(&pipeline, stage)?;
            }
            return finish_evaluate(&pipeline, a.strict);
        }
    }
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ThresholdFailed) => {
            eprintln!("tap-error threshold not met");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
