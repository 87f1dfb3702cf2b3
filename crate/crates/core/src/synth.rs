//! Synthetic intra-vehicle channel generator.
//!
//! Each record is a line-of-sight ray plus Saleh-Valenzuela clustered
//! multipath and additive complex Gaussian measurement noise:
//!
//! ```text
//! H(f) = sum_p a_p exp(-j 2 pi f tau_p) + n(f)
//! ```
//!
//! Draw order from the per-distance stream (documented so the stream can be
//! replayed elsewhere):
//! 1. the first cluster starts at the LOS delay, which stands in for its first
//!    ray, so its first diffuse ray is offset by one `Exp(ray_rate)` draw;
//!    later clusters follow at `Exp(cluster_rate)` inter-arrivals and begin
//!    with a ray at the cluster time;
//! 2. for each ray below `max_excess_delay`: one uniform phase, then the next
//!    ray inter-arrival `Exp(ray_rate)`; a cluster ends at the first ray past
//!    `max_excess_delay`, then the next cluster inter-arrival is drawn;
//! 3. after all paths, one complex Gaussian noise sample per frequency point.
//!
//! The LOS ray follows the path-loss law exactly; the diffuse rays share
//! `P_los / K(d)` in proportion to their double-exponential weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ChannelDataset, CtfRecord, FrequencyGrid, SPEED_OF_LIGHT};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub pathloss_exponent: f64,
    pub ref_loss_db_at_1m: f64,
    pub rician_k_db_at_1m: f64,
    pub k_decay_db_per_m: f64,
    pub cluster_rate_per_ns: f64,
    pub ray_rate_per_ns: f64,
    pub cluster_decay_ns: f64,
    pub ray_decay_ns: f64,
    pub max_excess_delay_ns: f64,
    /// Noise power relative to the LOS power at 1 m.
    pub noise_floor_db: f64,
    pub rng_seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            pathloss_exponent: 1.8,
            ref_loss_db_at_1m: 68.0,
            rician_k_db_at_1m: 8.0,
            k_decay_db_per_m: 0.5,
            cluster_rate_per_ns: 0.05,
            ray_rate_per_ns: 0.4,
            cluster_decay_ns: 12.0,
            ray_decay_ns: 4.0,
            max_excess_delay_ns: 80.0,
            noise_floor_db: -45.0,
            rng_seed: 0x5EED_0060,
        }
    }
}

impl SynthParams {
    pub fn validate(&self, grid: &FrequencyGrid) -> Result<()> {
        let positive = [
            ("cluster_rate_per_ns", self.cluster_rate_per_ns),
            ("ray_rate_per_ns", self.ray_rate_per_ns),
            ("cluster_decay_ns", self.cluster_decay_ns),
            ("ray_decay_ns", self.ray_decay_ns),
            ("max_excess_delay_ns", self.max_excess_delay_ns),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [
            ("pathloss_exponent", self.pathloss_exponent),
            ("ref_loss_db_at_1m", self.ref_loss_db_at_1m),
            ("rician_k_db_at_1m", self.rician_k_db_at_1m),
            ("k_decay_db_per_m", self.k_decay_db_per_m),
        ] {
            if !value.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if self.noise_floor_db.is_nan() || self.noise_floor_db == f64::INFINITY {
            return Err(Error::Config("noise_floor_db must be finite or -inf".into()));
        }
        let alias_ns = grid.max_unaliased_delay_s() * 1e9;
        if self.max_excess_delay_ns >= alias_ns {
            return Err(Error::Config(format!(
                "max excess delay {} ns aliases on a grid with {alias_ns} ns delay span",
                self.max_excess_delay_ns
            )));
        }
        Ok(())
    }

    /// LOS power (linear) at `distance_m` from the path-loss law.
    pub fn los_power(&self, distance_m: f64) -> f64 {
        let loss_db = self.ref_loss_db_at_1m + 10.0 * self.pathloss_exponent * distance_m.log10();
        10f64.powf(-loss_db / 10.0)
    }

    pub fn rician_k_db(&self, distance_m: f64) -> f64 {
        self.rician_k_db_at_1m - self.k_decay_db_per_m * (distance_m - 1.0)
    }

    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_floor_db - self.ref_loss_db_at_1m) / 10.0)
    }
}

/// One propagation path: absolute delay and complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub delay_s: f64,
    pub amplitude: Complex64,
}

/// `sum_p a_p exp(-j 2 pi f tau_p)` on every grid frequency.
pub fn ctf_from_paths(paths: &[Path], grid: &FrequencyGrid) -> Vec<Complex64> {
    grid.frequencies()
        .map(|f| {
            paths
                .iter()
                .map(|p| p.amplitude * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * p.delay_s))
                .sum()
        })
        .collect()
}

fn draw_paths(
    distance_m: f64,
    grid: &FrequencyGrid,
    params: &SynthParams,
    rng: &mut rng::StreamRng,
) -> Vec<Path> {
    let los_delay = distance_m / SPEED_OF_LIGHT;
    let los_power = params.los_power(distance_m);
    let max_excess = params.max_excess_delay_ns;
    let alias_limit_ns = grid.max_unaliased_delay_s() * 1e9 - los_delay * 1e9;

    // (excess delay ns, weight, phasor)
    let mut rays: Vec<(f64, f64, Complex64)> = Vec::new();
    let mut cluster_t = 0.0;
    let mut first_cluster = true;
    while cluster_t < max_excess {
        // the first cluster starts with the LOS ray itself
        let mut ray_t = if first_cluster {
            rng::exponential(rng, params.ray_rate_per_ns)
        } else {
            0.0
        };
        loop {
            let excess = cluster_t + ray_t;
            if excess >= max_excess {
                break;
            }
            let phasor = rng::unit_phasor(rng);
            if excess < alias_limit_ns {
                let weight = (-cluster_t / params.cluster_decay_ns).exp()
                    * (-ray_t / params.ray_decay_ns).exp();
                rays.push((excess, weight, phasor));
            }
            ray_t += rng::exponential(rng, params.ray_rate_per_ns);
        }
        first_cluster = false;
        cluster_t += rng::exponential(rng, params.cluster_rate_per_ns);
    }

    let mut paths = vec![Path {
        delay_s: los_delay,
        amplitude: Complex64::new(los_power.sqrt(), 0.0),
    }];
    let total_weight: f64 = rays.iter().map(|r| r.1).sum();
    if total_weight > 0.0 {
        let diffuse = los_power / 10f64.powf(params.rician_k_db(distance_m) / 10.0);
        paths.extend(rays.iter().map(|&(excess, weight, phasor)| Path {
            delay_s: los_delay + excess * 1e-9,
            amplitude: phasor * (diffuse * weight / total_weight).sqrt(),
        }));
    }
    paths
}

/// Propagation paths used for the record at `distance_m`, without noise.
pub fn generate_paths(distance_m: f64, grid: &FrequencyGrid, params: &SynthParams) -> Result<Vec<Path>> {
    check_distance(distance_m)?;
    params.validate(grid)?;
    let mut rng = rng::stream(rng::derive_seed_f64(params.rng_seed, distance_m));
    Ok(draw_paths(distance_m, grid, params, &mut rng))
}

fn check_distance(distance_m: f64) -> Result<()> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::Validation(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    Ok(())
}

pub fn generate_ctf(distance_m: f64, grid: &FrequencyGrid, params: &SynthParams) -> Result<CtfRecord> {
    check_distance(distance_m)?;
    params.validate(grid)?;
    let mut rng = rng::stream(rng::derive_seed_f64(params.rng_seed, distance_m));
    let paths = draw_paths(distance_m, grid, params, &mut rng);
    let mut h = ctf_from_paths(&paths, grid);
    let noise = params.noise_power();
    for x in h.iter_mut() {
        *x += rng::complex_gaussian(&mut rng, noise);
    }
    CtfRecord::from_complex(distance_m, *grid, h)
}

pub fn generate_dataset(
    train_distances_m: &[f64],
    test_distances_m: &[f64],
    grid: &FrequencyGrid,
    params: &SynthParams,
) -> Result<ChannelDataset> {
    if train_distances_m.is_empty() || test_distances_m.is_empty() {
        return Err(Error::Validation(
            "both the training and test distance lists must be non-empty".into(),
        ));
    }
    let all: Vec<f64> = train_distances_m.iter().chain(test_distances_m).copied().collect();
    for (i, d) in all.iter().enumerate() {
        check_distance(*d)?;
        if all[..i].contains(d) {
            return Err(Error::Validation(format!("duplicate distance {d} m")));
        }
    }
    params.validate(grid)?;
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let records = sorted
        .par_iter()
        .map(|d| generate_ctf(*d, grid, params))
        .collect::<Result<Vec<_>>>()?;
    ChannelDataset::new(records, train_distances_m.to_vec(), test_distances_m.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{self, PhaseSource, WindowSpec};

    fn pure_los() -> SynthParams {
        SynthParams {
            cluster_rate_per_ns: 1e-12,
            ray_rate_per_ns: 1e-12,
            noise_floor_db: f64::NEG_INFINITY,
            ..SynthParams::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = FrequencyGrid::cabin_default();
        let p = SynthParams::default();
        let a = generate_ctf(2.24, &g, &p).unwrap();
        let b = generate_ctf(2.24, &g, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_ctf(2.24, &g, &SynthParams { rng_seed: 1, ..p }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn aliasing_configuration_is_rejected() {
        let g = FrequencyGrid::cabin_default();
        let p = SynthParams {
            max_excess_delay_ns: 100.0,
            ..SynthParams::default()
        };
        assert!(matches!(generate_ctf(1.0, &g, &p), Err(Error::Config(_))));
        let coarse = FrequencyGrid::new(55e9, 65e9, 40e6).unwrap();
        assert!(generate_ctf(1.0, &coarse, &SynthParams::default()).is_err());
    }

    #[test]
    fn path_delays_stay_unaliased() {
        let g = FrequencyGrid::cabin_default();
        for seed in 0..20 {
            let p = SynthParams { rng_seed: seed, ..SynthParams::default() };
            for d in [1.18, 9.75, 15.0] {
                let paths = generate_paths(d, &g, &p).unwrap();
                assert!(paths.iter().all(|x| x.delay_s < g.max_unaliased_delay_s()));
                assert!(paths.len() > 1);
            }
        }
    }

    #[test]
    fn diffuse_power_follows_k_factor() {
        let g = FrequencyGrid::cabin_default();
        let p = SynthParams::default();
        let paths = generate_paths(3.0, &g, &p).unwrap();
        let los = paths[0].amplitude.norm_sqr();
        let diffuse: f64 = paths[1..].iter().map(|x| x.amplitude.norm_sqr()).sum();
        assert!((los - p.los_power(3.0)).abs() < 1e-15 * los.max(1.0));
        assert!((10.0 * (los / diffuse).log10() - p.rician_k_db(3.0)).abs() < 1e-9);
    }

    #[test]
    fn pure_los_channel_gives_single_tap_on_the_pathloss_law() {
        let g = FrequencyGrid::cabin_default();
        let p = pure_los();
        let d = 2.35;
        let rec = generate_ctf(d, &g, &p).unwrap();
        let hann = dsp::record_to_cir(&rec, PhaseSource::Measured, WindowSpec::HANN).unwrap();
        let pdp = dsp::cir_to_pdp(&hann, -60.0).unwrap();
        let tdl = dsp::extract_tdl(&pdp, 1e-9, 25.0).unwrap();
        assert_eq!(tdl.len(), 1);
        assert!((tdl.taps()[0].delay_s - d / SPEED_OF_LIGHT).abs() <= 1e-9);

        // the tap carries all of the response energy; unwindowed so the
        // transform preserves it
        let cir = dsp::record_to_cir(&rec, PhaseSource::Measured, WindowSpec::RECTANGULAR).unwrap();
        let power: f64 = cir.taps().iter().map(|h| h.norm_sqr()).sum();
        let law_db = -(p.ref_loss_db_at_1m + 10.0 * p.pathloss_exponent * d.log10());
        assert!((10.0 * power.log10() - law_db).abs() < 0.1);
    }

    #[test]
    fn mean_gain_follows_pathloss_slope() {
        let g = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let mean_gain = |d: f64| {
            let total: f64 = (0..200u64)
                .map(|seed| {
                    let p = SynthParams { rng_seed: seed, ..SynthParams::default() };
                    let r = generate_ctf(d, &g, &p).unwrap();
                    r.gain_db().iter().sum::<f64>() / r.gain_db().len() as f64
                })
                .sum();
            total / 200.0
        };
        let slope = mean_gain(2.0) - mean_gain(8.0);
        let want = 10.0 * 1.8 * 4f64.log10();
        assert!((slope - want).abs() < 0.5, "slope {slope} vs {want}");
    }

    #[test]
    fn los_tap_dominates_short_links() {
        let g = FrequencyGrid::cabin_default();
        for seed in 0..50 {
            let p = SynthParams { rng_seed: seed, ..SynthParams::default() };
            for d in [1.18, 2.24, 3.0] {
                let rec = generate_ctf(d, &g, &p).unwrap();
                let cir = dsp::record_to_cir(&rec, PhaseSource::Measured, WindowSpec::HANN).unwrap();
                let energy: f64 = cir.taps().iter().map(|h| h.norm_sqr()).sum();
                assert!(energy.is_finite() && energy > 0.0);
                let peak = cir
                    .taps()
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
                    .unwrap()
                    .0;
                let los_index = d / SPEED_OF_LIGHT / cir.delay_step_s();
                assert!((peak as f64 - los_index).abs() <= 1.5, "seed {seed} d {d}");
            }
        }
    }

    #[test]
    fn dataset_is_order_independent() {
        let g = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let p = SynthParams::default();
        let a = generate_dataset(&[1.18, 2.24, 5.12], &[3.7], &g, &p).unwrap();
        let b = generate_dataset(&[5.12, 1.18, 2.24], &[3.7], &g, &p).unwrap();
        for d in [1.18, 2.24, 5.12, 3.7] {
            assert_eq!(a.record(d), b.record(d));
        }
        let single = generate_dataset(&[1.0], &[2.0], &g, &p).unwrap();
        assert_eq!(single.records().len(), 2);
    }

    #[test]
    fn dataset_rejects_duplicates_and_empty_lists() {
        let g = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let p = SynthParams::default();
        assert!(generate_dataset(&[1.0, 1.0], &[2.0], &g, &p).is_err());
        assert!(generate_dataset(&[1.0], &[1.0], &g, &p).is_err());
        assert!(generate_dataset(&[], &[1.0], &g, &p).is_err());
        assert!(generate_dataset(&[1.0], &[-1.0], &g, &p).is_err());
    }

    #[test]
    fn default_split_has_fifteen_records() {
        let g = FrequencyGrid::new(55e9, 57.5e9, 10e6).unwrap();
        let ds = generate_dataset(
            &crate::model::DEFAULT_TRAIN_DISTANCES_M,
            &crate::model::DEFAULT_TEST_DISTANCES_M,
            &g,
            &SynthParams::default(),
        )
        .unwrap();
        assert_eq!(ds.records().len(), 15);
        assert_eq!(ds.train_distances_m().len(), 13);
        assert_eq!(ds.test_distances_m(), &[3.7, 9.75]);
    }
}
