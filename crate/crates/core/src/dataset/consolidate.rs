//! Merging the minute PV stream and the hourly NWP stream onto one
//! 15-minute grid.

use std::ops::Range;

use crate::dataset::binning::{bin_distribution, BinnedDistribution, DEFAULT_BINS};
use crate::dataset::series::{format_timestamp, Minute, RawNwpSeries, RawPvSeries};
use crate::error::{Error, Result};

pub const GRID_MINUTES: i64 = 15;
pub const STEPS_PER_HOUR: usize = 4;
pub const NWP_CHANNELS: usize = 5;
/// Five NWP channels followed by PV power.
pub const CHANNELS: usize = NWP_CHANNELS + 1;
pub const PV_CHANNEL: usize = NWP_CHANNELS;
pub const CHANNEL_NAMES: [&str; CHANNELS] =
    ["temp_c", "pressure_kpa", "ghi_wm2", "wind_ms", "rh_pct", "power_w"];

pub const MIN_COVERAGE_DAYS: i64 = 6;
/// Longest interior gap that is bridged by linear interpolation.
pub const MAX_GAP_MINUTES: i64 = 120;

/// Per-channel min/max scaling to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub min: [f64; CHANNELS],
    pub max: [f64; CHANNELS],
}

impl Normalization {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; CHANNELS]>) -> Self {
        let mut min = [f64::INFINITY; CHANNELS];
        let mut max = [f64::NEG_INFINITY; CHANNELS];
        for row in rows {
            for c in 0..CHANNELS {
                min[c] = min[c].min(row[c]);
                max[c] = max[c].max(row[c]);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, row: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let span = self.max[c] - self.min[c];
            out[c] = if span > 0.0 { (row[c] - self.min[c]) / span } else { 0.0 };
        }
        out
    }

    pub fn invert(&self, row: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        let mut out = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            out[c] = self.min[c] + row[c] * (self.max[c] - self.min[c]);
        }
        out
    }
}

/// Uniform 15-minute grid of the six channels plus hourly PV histograms.
#[derive(Clone, Debug)]
pub struct AlignedDataset {
    /// Hour-aligned timestamp of the first grid point.
    pub start: Minute,
    /// Raw channel values in physical units, one row per 15 minutes.
    pub grid: Vec<[f64; CHANNELS]>,
    /// One histogram per hour, built from that hour's 60 minute readings.
    pub hourly: Vec<BinnedDistribution>,
    pub p_max: f64,
    pub norm: Normalization,
}

impl AlignedDataset {
    pub fn hours(&self) -> usize {
        self.hourly.len()
    }

    pub fn end(&self) -> Minute {
        self.start + self.hours() as i64 * 60
    }

    pub fn normalized(&self, step: usize) -> [f64; CHANNELS] {
        self.norm.apply(&self.grid[step])
    }

    /// Refits normalization on the given grid index ranges only.
    pub fn refit_normalization(&mut self, ranges: &[Range<usize>]) {
        let grid = &self.grid;
        self.norm = Normalization::fit(ranges.iter().flat_map(|r| grid[r.clone()].iter()));
    }

    /// Grid index of a timestamp, if it lies on the grid.
    pub fn step_of(&self, minute: Minute) -> Option<usize> {
        let off = minute - self.start;
        (off >= 0 && off % GRID_MINUTES == 0 && (off / GRID_MINUTES) as usize <= self.grid.len())
            .then_some((off / GRID_MINUTES) as usize)
    }
}

fn floor_hour(m: Minute) -> Minute {
    m.div_euclid(60) * 60
}

fn ceil_hour(m: Minute) -> Minute {
    -floor_hour(-m)
}

pub fn consolidate(pv: &RawPvSeries, nwp: &RawNwpSeries) -> Result<AlignedDataset> {
    consolidate_with_bins(pv, nwp, DEFAULT_BINS)
}

/// Interpolates NWP linearly to 15 minutes, averages PV over each 15-minute
/// interval and bins each hour's minute readings.
pub fn consolidate_with_bins(pv: &RawPvSeries, nwp: &RawNwpSeries, bins: usize) -> Result<AlignedDataset> {
    let (Some(pv_first), Some(pv_last)) = (pv.records.first(), pv.records.last()) else {
        return Err(Error::Data("PV series is empty".into()));
    };
    let (Some(nwp_first), Some(nwp_last)) = (nwp.records.first(), nwp.records.last()) else {
        return Err(Error::Data("NWP series is empty".into()));
    };
    let start = ceil_hour(pv_first.minute.max(nwp_first.minute));
    let end = floor_hour((pv_last.minute + 1).min(nwp_last.minute + 60));
    if end - start < MIN_COVERAGE_DAYS * 1440 {
        return Err(Error::Data(format!(
            "overlapping coverage {} .. {} is shorter than {MIN_COVERAGE_DAYS} days",
            format_timestamp(start),
            format_timestamp(end.max(start))
        )));
    }

    let minutes = minute_grid(pv, start, end)?;
    let n_hours = ((end - start) / 60) as usize;
    let n_steps = n_hours * STEPS_PER_HOUR;
    let nwp_grid = nwp_grid(nwp, start, n_steps)?;

    let mut grid = Vec::with_capacity(n_steps);
    for (i, nwp_row) in nwp_grid.iter().enumerate() {
        let chunk = &minutes[i * GRID_MINUTES as usize..(i + 1) * GRID_MINUTES as usize];
        let mut row = [0.0; CHANNELS];
        row[..NWP_CHANNELS].copy_from_slice(nwp_row);
        row[PV_CHANNEL] = chunk.iter().sum::<f64>() / chunk.len() as f64;
        grid.push(row);
    }
    let hourly = minutes
        .chunks(60)
        .map(|h| bin_distribution(h, pv.p_max, bins))
        .collect::<Result<Vec<_>>>()?;
    let norm = Normalization::fit(grid.iter());
    Ok(AlignedDataset { start, grid, hourly, p_max: pv.p_max, norm })
}

/// Dense minute readings on `[start, end)`, bridging short gaps linearly.
fn minute_grid(pv: &RawPvSeries, start: Minute, end: Minute) -> Result<Vec<f64>> {
    let n = (end - start) as usize;
    let mut out = vec![0.0; n];
    let recs = &pv.records;
    let first = recs.partition_point(|r| r.minute < start);
    // The record at or before `start` anchors interpolation at the left edge.
    let mut prev = if first > 0 && recs.get(first).is_none_or(|r| r.minute > start) {
        first - 1
    } else {
        first
    };
    for m in start..end {
        while prev + 1 < recs.len() && recs[prev + 1].minute <= m {
            prev += 1;
        }
        let a = recs[prev];
        let idx = (m - start) as usize;
        if a.minute == m {
            out[idx] = a.power_w;
            continue;
        }
        let Some(&b) = recs.get(prev + 1) else {
            return Err(Error::Data(format!("PV stream ends before {}", format_timestamp(m))));
        };
        if b.minute - a.minute - 1 > MAX_GAP_MINUTES {
            return Err(Error::Data(format!(
                "PV gap of {} minutes after {}",
                b.minute - a.minute - 1,
                format_timestamp(a.minute)
            )));
        }
        let w = (m - a.minute) as f64 / (b.minute - a.minute) as f64;
        out[idx] = a.power_w + w * (b.power_w - a.power_w);
    }
    Ok(out)
}

fn nwp_grid(nwp: &RawNwpSeries, start: Minute, n_steps: usize) -> Result<Vec<[f64; NWP_CHANNELS]>> {
    let recs = &nwp.records;
    let mut out = Vec::with_capacity(n_steps);
    let mut prev = recs.partition_point(|r| r.minute <= start).saturating_sub(1);
    for i in 0..n_steps {
        let t = start + i as i64 * GRID_MINUTES;
        while prev + 1 < recs.len() && recs[prev + 1].minute <= t {
            prev += 1;
        }
        let a = recs[prev];
        match recs.get(prev + 1) {
            Some(b) => {
                if b.minute - a.minute - 60 > MAX_GAP_MINUTES {
                    return Err(Error::Data(format!(
                        "NWP gap of {} minutes after {}",
                        b.minute - a.minute - 60,
                        format_timestamp(a.minute)
                    )));
                }
                let w = (t - a.minute) as f64 / (b.minute - a.minute) as f64;
                let (ca, cb) = (a.channels(), b.channels());
                out.push(std::array::from_fn(|c| ca[c] + w * (cb[c] - ca[c])));
            }
            // Past the last hourly record: hold it.
            None => out.push(a.channels()),
        }
    }
    Ok(out)
}
