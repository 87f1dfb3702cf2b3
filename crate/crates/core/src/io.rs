//! CSV interchange for every tabular artifact.
//!
//! | artifact | header |
//! |---|---|
//! | CTF | `distance_m,freq_hz,gain_db` |
//! | PDP | `delay_ns,power_db,trend_db` |
//! | TDL | `tap_index,delay_ns,power_db` |
//! | losses | `epoch,loss_train,loss_test` |
//! | tuning | `layer1,layer2,epochs,loss_train,loss_test,score,status` |
//! | BER curve | `snr_db,bit_errors,bits,ber` |
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the values exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CtfRecord, FrequencyGrid, Pdp, TdlModel, TdlTap};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufReader::new(file))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: DeserializeOwned>(r: R, what: &str) -> Result<Vec<T>> {
    let mut rows = Vec::new();
    for (i, row) in csv::Reader::from_reader(r).deserialize().enumerate() {
        rows.push(row.map_err(|e| Error::parse(format!("{what} CSV row {}", i + 1), e))?);
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct CtfRow {
    distance_m: f64,
    freq_hz: f64,
    gain_db: f64,
}

pub fn write_ctf_csv<W: Write>(w: W, records: &[&CtfRecord]) -> Result<()> {
    write_rows(
        w,
        records.iter().flat_map(|r| {
            r.grid().frequencies().zip(r.gain_db()).map(|(f, g)| CtfRow {
                distance_m: r.distance_m(),
                freq_hz: f,
                gain_db: *g,
            })
        }),
    )
}

/// Grid spanned by `freqs`, preferring `expected` when every frequency
/// matches it.
fn infer_grid(freqs: &[f64], expected: Option<&FrequencyGrid>) -> Result<FrequencyGrid> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1.0);
    if let Some(g) = expected {
        if g.n_points() == freqs.len() && freqs.iter().enumerate().all(|(k, f)| close(*f, g.frequency(k))) {
            return Ok(*g);
        }
    }
    if freqs.len() < 2 {
        return Err(Error::parse("CTF CSV", "a record needs at least two frequencies"));
    }
    let n = freqs.len();
    let mut step = (freqs[n - 1] - freqs[0]) / (n - 1) as f64;
    if (step - step.round()).abs() < 1e-6 * step {
        step = step.round();
    }
    let grid = FrequencyGrid::new(freqs[0], freqs[0] + step * (n - 1) as f64, step)?;
    if let Some(k) = (0..n).find(|&k| !close(freqs[k], grid.frequency(k))) {
        return Err(Error::parse(
            "CTF CSV",
            format!("frequency {} Hz breaks the uniform grid at index {k}", freqs[k]),
        ));
    }
    Ok(grid)
}

/// Records in file order; rows of one record must be contiguous and sorted
/// by frequency.
pub fn read_ctf_csv<R: Read>(r: R, expected_grid: Option<&FrequencyGrid>) -> Result<Vec<CtfRecord>> {
    let rows: Vec<CtfRow> = read_rows(r, "CTF")?;
    let mut records = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let d = rows[start].distance_m;
        let end = start + rows[start..].iter().take_while(|r| r.distance_m == d).count();
        if records.iter().any(|r: &CtfRecord| r.distance_m() == d) {
            return Err(Error::parse("CTF CSV", format!("rows for {d} m are not contiguous")));
        }
        let freqs: Vec<f64> = rows[start..end].iter().map(|r| r.freq_hz).collect();
        let grid = infer_grid(&freqs, expected_grid)?;
        let gain = rows[start..end].iter().map(|r| r.gain_db).collect();
        records.push(CtfRecord::new(d, grid, gain)?);
        start = end;
    }
    Ok(records)
}

#[derive(Debug, Serialize, Deserialize)]
struct PdpRow {
    delay_ns: f64,
    power_db: f64,
    trend_db: f64,
}

/// PDP with its trend alongside.
pub fn write_pdp_csv<W: Write>(w: W, pdp: &Pdp, trend: &Pdp) -> Result<()> {
    if trend.len() != pdp.len() {
        return Err(Error::dim("trend", pdp.len(), trend.len()));
    }
    write_rows(
        w,
        (0..pdp.len()).map(|n| PdpRow {
            delay_ns: pdp.delay_s(n) * 1e9,
            power_db: pdp.power_db()[n],
            trend_db: trend.power_db()[n],
        }),
    )
}

/// Returns (profile, trend). The delay step is taken from the first two rows.
pub fn read_pdp_csv<R: Read>(r: R, floor_db: f64) -> Result<(Pdp, Pdp)> {
    let rows: Vec<PdpRow> = read_rows(r, "PDP")?;
    if rows.len() < 2 {
        return Err(Error::parse("PDP CSV", "need at least two rows"));
    }
    let step = (rows[1].delay_ns - rows[0].delay_ns) * 1e-9;
    let power = rows.iter().map(|r| r.power_db).collect();
    let trend = rows.iter().map(|r| r.trend_db).collect();
    Ok((Pdp::new(step, power, floor_db)?, Pdp::new(step, trend, floor_db)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct TdlRow {
    tap_index: usize,
    delay_ns: f64,
    power_db: f64,
}

pub fn write_tdl_csv<W: Write>(w: W, tdl: &TdlModel) -> Result<()> {
    write_rows(
        w,
        tdl.taps().iter().enumerate().map(|(i, t)| TdlRow {
            tap_index: i,
            delay_ns: t.delay_s * 1e9,
            power_db: t.power_db,
        }),
    )
}

pub fn read_tdl_csv<R: Read>(r: R, threshold_db: f64) -> Result<TdlModel> {
    let rows: Vec<TdlRow> = read_rows(r, "TDL")?;
    for (i, row) in rows.iter().enumerate() {
        if row.tap_index != i {
            return Err(Error::parse("TDL CSV", format!("row {} has tap_index {}", i + 1, row.tap_index)));
        }
    }
    TdlModel::new(
        rows.iter()
            .map(|r| TdlTap {
                delay_s: r.delay_ns * 1e-9,
                power_db: r.power_db,
            })
            .collect(),
        threshold_db,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub loss_train: f64,
    pub loss_test: f64,
}

pub fn write_loss_csv<W: Write>(w: W, loss_train: &[f64], loss_test: &[f64]) -> Result<()> {
    if loss_train.len() != loss_test.len() {
        return Err(Error::dim("loss history", loss_train.len(), loss_test.len()));
    }
    write_rows(
        w,
        loss_train.iter().zip(loss_test).enumerate().map(|(i, (a, b))| LossRow {
            epoch: i + 1,
            loss_train: *a,
            loss_test: *b,
        }),
    )
}

pub fn read_loss_csv<R: Read>(r: R) -> Result<Vec<LossRow>> {
    read_rows(r, "loss")
}

/// Generic row writer/reader for types that define their own columns.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    write_rows(w, rows)
}

pub fn read_csv<R: Read, T: DeserializeOwned>(r: R, what: &str) -> Result<Vec<T>> {
    read_rows(r, what)
}
