//! Scalar comparison metrics between profiles and TDL models.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::TdlModel;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim("metric input", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Domain("metric of empty vectors".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Domain("metric inputs must be finite".into()));
    }
    Ok(())
}

/// Root-mean-square difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Coefficient of determination of `candidate` against `reference`, with the
/// total sum of squares taken about the reference mean.
pub fn r_squared(reference: &[f64], candidate: &[f64]) -> Result<f64> {
    check_pair(reference, candidate)?;
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_tot: f64 = reference.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Domain("R² undefined for a constant reference".into()));
    }
    let ss_res: f64 = reference
        .iter()
        .zip(candidate)
        .map(|(y, c)| (y - c) * (y - c))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Integer picosecond key; taps produced by the same binning share keys.
fn delay_key(delay_s: f64) -> i64 {
    (delay_s * 1e12).round() as i64
}

/// Tap powers of two models on the union of their delays. A delay present
/// in only one model takes the other model's threshold floor as its value.
pub fn aligned_tap_powers(a: &TdlModel, b: &TdlModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let (floor_a, floor_b) = match (a.floor_db(), b.floor_db()) {
        (Some(fa), Some(fb)) => (fa, fb),
        _ => return Err(Error::Domain("cannot align an empty TDL model".into())),
    };
    let mut union: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for t in a.taps() {
        union.insert(delay_key(t.delay_s), (t.power_db, floor_b));
    }
    for t in b.taps() {
        union
            .entry(delay_key(t.delay_s))
            .and_modify(|e| e.1 = t.power_db)
            .or_insert((floor_a, t.power_db));
    }
    Ok(union.into_values().unzip())
}

/// Mean normalized per-tap deviation of `candidate` from `reference`.
///
/// Each delay in the union of both tap sets contributes
/// `|P_cand - P_ref| / threshold_ref`, where the reference dynamic range is its
/// threshold (peak minus floor). A tap missing from one model is taken to sit
/// at the reference floor, so it contributes its full height above that floor.
pub fn average_tap_error(reference: &TdlModel, candidate: &TdlModel) -> Result<f64> {
    let floor = reference
        .floor_db()
        .ok_or_else(|| Error::Domain("average tap error needs a non-empty reference".into()))?;
    let range = reference.threshold_db();
    let mut union: BTreeMap<i64, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for t in reference.taps() {
        union.entry(delay_key(t.delay_s)).or_default().0 = Some(t.power_db);
    }
    for t in candidate.taps() {
        union.entry(delay_key(t.delay_s)).or_default().1 = Some(t.power_db);
    }
    let total: f64 = union
        .values()
        .map(|(r, c)| (c.unwrap_or(floor) - r.unwrap_or(floor)).abs() / range)
        .sum();
    Ok(total / union.len() as f64)
}
