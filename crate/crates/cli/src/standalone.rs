//! File-in, file-out variants of the stage subcommands.

use std::path::{Path, PathBuf};

use cabinwave::ber;
use cabinwave::io;
use cabinwave::model::CtfRecord;
use cabinwave::neural;
use cabinwave::pipeline::{distance_label, profiles, tdl_of, ExperimentConfig};
use cabinwave::Result;

fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| cabinwave::Error::File {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

pub fn predict(config: &ExperimentConfig, distances: &[f64], model: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let model_path = model
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out_dir.join("train/model.txt"));
    if !model_path.exists() {
        return Err(cabinwave::Error::MissingArtifact {
            stage: "train",
            path: model_path,
        });
    }
    let model = neural::read_model(&io::read_to_string(&model_path)?)?;
    let records = distances
        .iter()
        .map(|&d| neural::predict_ctf(&model, d, &config.grid))
        .collect::<Result<Vec<CtfRecord>>>()?;
    let refs: Vec<&CtfRecord> = records.iter().collect();
    match output {
        Some(path) => {
            io::write_ctf_csv(io::create(path)?, &refs)?;
            eprintln!("wrote {}", path.display());
        }
        None => io::write_ctf_csv(std::io::stdout().lock(), &refs)?,
    }
    Ok(())
}

pub fn pdp(config: &ExperimentConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    config.dsp.validate()?;
    let dir = out_dir(out)?;
    let records = io::read_ctf_csv(io::open(input)?, None)?;
    for rec in &records {
        let (pdp, trend) = profiles(rec, &config.dsp)?;
        let path = dir.join(format!("pdp_{}.csv", distance_label(rec.distance_m())));
        io::write_pdp_csv(io::create(&path)?, &pdp, &trend)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn tdl(config: &ExperimentConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    config.dsp.validate()?;
    let dir = out_dir(out)?;
    let (pdp, trend) = io::read_pdp_csv(io::open(input)?, config.dsp.floor_db)?;
    let name = stem(input);
    for (suffix, profile) in [("tdl", &pdp), ("trend_tdl", &trend)] {
        let tdl = tdl_of(profile, &config.dsp)?;
        let path = dir.join(format!("{name}_{suffix}.csv"));
        io::write_tdl_csv(io::create(&path)?, &tdl)?;
        eprintln!("wrote {} ({} taps)", path.display(), tdl.len());
    }
    Ok(())
}

pub fn ber(config: &ExperimentConfig, inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let cfg = &config.ber;
    cfg.validate()?;
    let dir = out_dir(out)?;
    let mut curves = Vec::new();
    for input in inputs {
        let tdl = io::read_tdl_csv(io::open(input)?, config.dsp.tdl_threshold_db)?;
        let fir = ber::tdl_to_fir(&tdl, cfg.symbol_rate, cfg.rng_seed)?;
        let curve = ber::simulate_ber(&fir, cfg)?;
        let path = dir.join(format!("{}_ber.csv", stem(input)));
        io::write_csv(io::create(&path)?, &curve.points)?;
        eprintln!("wrote {}", path.display());
        curves.push(curve);
    }
    if let [a, b] = curves.as_slice() {
        println!("max |log10 BER gap|: {:.4}", ber::max_log10_gap(a, b));
    }
    Ok(())
}
