//! Seeded synthetic PV and NWP streams.
//!
//! PV follows a half-sine daytime envelope whose length and amplitude vary
//! with the season, scaled by an hourly first-order autoregressive
//! cloudiness factor in `[0.1, 1]` (interpolated to minutes) plus a little
//! noise. The NWP stream is driven by the same cloudiness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::consolidate::MIN_COVERAGE_DAYS;
use crate::dataset::series::{Minute, NwpRecord, PvRecord, RawNwpSeries, RawPvSeries};
use crate::error::{Error, Result};

/// 2016-01-01T00:00:00Z in minutes.
pub const SYNTH_START: Minute = 16_801 * 1440;

const CLOUD_PERSISTENCE: f64 = 0.92;
const CLOUD_SHOCK: f64 = 0.45;

fn day_of_year(day: u32) -> f64 {
    (day % 365) as f64
}

/// Seasonal phase in `[-1, 1]`, peaking at the June solstice.
fn season(day: u32) -> f64 {
    (2.0 * std::f64::consts::PI * (day_of_year(day) - 80.0) / 365.0).sin()
}

/// Clear-sky fraction of rated power at `hour` (fractional) on `day`.
fn clear_sky(day: u32, hour: f64) -> f64 {
    let s = season(day);
    let length = 12.0 + 4.5 * s;
    let sunrise = 12.5 - length / 2.0;
    let x = (hour - sunrise) / length;
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let amplitude = 0.62 + 0.3 * s;
    amplitude * (std::f64::consts::PI * x).sin()
}

fn cloud_factor(z: f64) -> f64 {
    0.1 + 0.9 / (1.0 + (-(z + 0.8)).exp())
}

/// Generates `days` of one-minute PV and hourly NWP, deterministic per seed.
pub fn synth_generate(days: u32, seed: u64, p_max: f64) -> Result<(RawPvSeries, RawNwpSeries)> {
    if i64::from(days) < MIN_COVERAGE_DAYS {
        return Err(Error::Config(format!("need at least {MIN_COVERAGE_DAYS} days, got {days}")));
    }
    if !(p_max > 0.0) {
        return Err(Error::Config(format!("rated power must be positive, got {p_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let hours = days as usize * 24;

    // Hourly latent cloud state; one extra point so minute interpolation
    // has a right neighbour at the end.
    let mut latent = Vec::with_capacity(hours + 1);
    let mut z: f64 = unit.sample(&mut rng);
    for _ in 0..=hours {
        latent.push(z);
        z = CLOUD_PERSISTENCE * z + CLOUD_SHOCK * unit.sample(&mut rng);
    }
    let cloud: Vec<f64> = latent.iter().map(|&z| cloud_factor(z)).collect();

    let mut pv = Vec::with_capacity(hours * 60);
    for h in 0..hours {
        let day = (h / 24) as u32;
        for m in 0..60 {
            let hour = (h % 24) as f64 + m as f64 / 60.0;
            let env = clear_sky(day, hour);
            let power = if env > 0.0 {
                let c = cloud[h] + (cloud[h + 1] - cloud[h]) * m as f64 / 60.0;
                let noise = 0.015 * unit.sample(&mut rng);
                (p_max * env * (c + noise)).clamp(0.0, p_max)
            } else {
                0.0
            };
            pv.push(PvRecord { minute: SYNTH_START + (h * 60 + m) as i64, power_w: power });
        }
    }

    let mut pressure_anom = 0.0f64;
    let mut nwp = Vec::with_capacity(hours);
    for h in 0..hours {
        let day = (h / 24) as u32;
        let hour = (h % 24) as f64;
        let s = season(day);
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 9.0) / 24.0).sin();
        let cover = 1.0 - cloud[h];
        let mid_env = clear_sky(day, hour + 0.5);
        let ghi = (1000.0 * mid_env * cloud[h] * (1.0 + 0.05 * unit.sample(&mut rng))).max(0.0);
        let temp = 2.0 + 16.0 * s + 5.0 * diurnal * (1.0 - 0.5 * cover) - 2.0 * cover
            + 0.8 * unit.sample(&mut rng);
        pressure_anom = 0.97 * pressure_anom + 0.12 * unit.sample(&mut rng);
        let pressure = 93.0 + pressure_anom - 0.6 * cover;
        let wind = (2.5 + 2.0 * cover + 1.0 * diurnal.max(0.0) + 0.7 * unit.sample(&mut rng)).max(0.0);
        let rh = (55.0 + 30.0 * cover - 15.0 * diurnal + 4.0 * unit.sample(&mut rng) + rng.random_range(-1.0..1.0))
            .clamp(0.0, 100.0);
        nwp.push(NwpRecord {
            minute: SYNTH_START + h as i64 * 60,
            temp_c: temp,
            pressure_kpa: pressure,
            ghi_wm2: ghi,
            wind_ms: wind,
            rh_pct: rh,
        });
    }

    Ok((RawPvSeries { records: pv, p_max, clipped: 0 }, RawNwpSeries { records: nwp }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn night_is_exactly_zero() {
        let (pv, _) = synth_generate(8, 11, 5000.0).unwrap();
        for r in &pv.records {
            let minute_of_day = (r.minute - SYNTH_START).rem_euclid(1440);
            let day = ((r.minute - SYNTH_START) / 1440) as u32;
            if clear_sky(day, minute_of_day as f64 / 60.0) == 0.0 {
                assert_eq!(r.power_w, 0.0);
            }
            assert!((0.0..=5000.0).contains(&r.power_w));
        }
        // Midnight is always dark.
        assert!(pv.records.iter().step_by(1440).all(|r| r.power_w == 0.0));
    }

    #[test]
    fn same_seed_same_series() {
        let a = synth_generate(7, 3, 4000.0).unwrap();
        let b = synth_generate(7, 3, 4000.0).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(7, 4, 4000.0).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn too_few_days() {
        assert!(matches!(synth_generate(5, 0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn pv_tracks_irradiance() {
        let (pv, nwp) = synth_generate(60, 7, 5000.0).unwrap();
        let hourly: Vec<f64> = pv.records.chunks(60).map(|c| c.iter().map(|r| r.power_w).sum::<f64>() / 60.0).collect();
        let ghi: Vec<f64> = nwp.records.iter().map(|r| r.ghi_wm2).collect();
        let n = hourly.len() as f64;
        let (mx, my) = (hourly.iter().sum::<f64>() / n, ghi.iter().sum::<f64>() / n);
        let cov: f64 = hourly.iter().zip(&ghi).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = hourly.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ghi.iter().map(|y| (y - my).powi(2)).sum();
        let r = cov / (vx * vy).sqrt();
        assert!(r > 0.8, "correlation {r}");
    }
}
