//! Raw PV and NWP series and their CSV form.
//!
//! PV files have the header `timestamp,power_w` with one row per minute;
//! NWP files have `timestamp,temp_c,pressure_kpa,ghi_wm2,wind_ms,rh_pct`
//! with one row per hour. Timestamps are ISO-8601 UTC.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::error::{Error, Result};

pub const PV_HEADER: &str = "timestamp,power_w";
pub const NWP_HEADER: &str = "timestamp,temp_c,pressure_kpa,ghi_wm2,wind_ms,rh_pct";

/// Readings above `p_max` by more than this fraction are rejected rather
/// than clipped.
pub const OVER_RATED_TOLERANCE: f64 = 0.05;

/// Minutes since the Unix epoch.
pub type Minute = i64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PvRecord {
    pub minute: Minute,
    pub power_w: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawPvSeries {
    pub records: Vec<PvRecord>,
    pub p_max: f64,
    /// Readings clamped into `[0, p_max]` during ingestion.
    pub clipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NwpRecord {
    pub minute: Minute,
    pub temp_c: f64,
    pub pressure_kpa: f64,
    pub ghi_wm2: f64,
    pub wind_ms: f64,
    pub rh_pct: f64,
}

impl NwpRecord {
    pub fn channels(&self) -> [f64; 5] {
        [self.temp_c, self.pressure_kpa, self.ghi_wm2, self.wind_ms, self.rh_pct]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawNwpSeries {
    pub records: Vec<NwpRecord>,
}

pub fn parse_timestamp(s: &str) -> Option<Minute> {
    let s = s.trim();
    let dt = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc).naive_utc())
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()?;
    Some(dt.and_utc().timestamp().div_euclid(60))
}

pub fn format_timestamp(minute: Minute) -> String {
    DateTime::<Utc>::from_timestamp(minute * 60, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

fn parse_rows<const N: usize>(text: &str, header: &str) -> Result<Vec<(usize, Minute, [f64; N])>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => {
            return Err(Error::Parse { line: 1, msg: format!("expected header `{header}`, got `{}`", h.trim()) })
        }
        None => return Err(Error::Parse { line: 1, msg: "empty file".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != N + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, found {}", N + 1, fields.len()),
            });
        }
        let minute = parse_timestamp(fields[0]).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("bad timestamp `{}`", fields[0].trim()),
        })?;
        let mut vals = [0.0; N];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse { line: line_no, msg: format!("bad number `{}`", f.trim()) })?;
        }
        rows.push((line_no, minute, vals));
    }
    for w in rows.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(Error::Data(format!(
                "timestamps not increasing at line {}: {} follows {}",
                w[1].0,
                format_timestamp(w[1].1),
                format_timestamp(w[0].1)
            )));
        }
    }
    Ok(rows)
}

pub fn parse_pv_csv(text: &str, p_max: f64) -> Result<RawPvSeries> {
    if !(p_max > 0.0) {
        return Err(Error::Config(format!("rated power must be positive, got {p_max}")));
    }
    let rows = parse_rows::<1>(text, PV_HEADER)?;
    let mut clipped = 0;
    let mut records = Vec::with_capacity(rows.len());
    for (line, minute, [p]) in rows {
        if p > p_max * (1.0 + OVER_RATED_TOLERANCE) {
            return Err(Error::Data(format!(
                "line {line}: power {p} W exceeds rated {p_max} W by more than 5%"
            )));
        }
        let c = p.clamp(0.0, p_max);
        if c != p {
            clipped += 1;
        }
        records.push(PvRecord { minute, power_w: c });
    }
    if clipped > 0 {
        log::warn!("clipped {clipped} PV readings into [0, {p_max}] W");
    }
    Ok(RawPvSeries { records, p_max, clipped })
}

pub fn parse_nwp_csv(text: &str) -> Result<RawNwpSeries> {
    let rows = parse_rows::<5>(text, NWP_HEADER)?;
    let mut records = Vec::with_capacity(rows.len());
    for (line, minute, [t, p, ghi, wind, rh]) in rows {
        if !(0.0..=100.0).contains(&rh) {
            return Err(Error::Data(format!("line {line}: relative humidity {rh} outside [0, 100]")));
        }
        if ghi < 0.0 {
            return Err(Error::Data(format!("line {line}: negative irradiance {ghi}")));
        }
        records.push(NwpRecord { minute, temp_c: t, pressure_kpa: p, ghi_wm2: ghi, wind_ms: wind, rh_pct: rh });
    }
    Ok(RawNwpSeries { records })
}

/// Reads and validates both streams.
pub fn ingest_csv(pv_path: &Path, nwp_path: &Path, p_max: f64) -> Result<(RawPvSeries, RawNwpSeries)> {
    let pv = parse_pv_csv(&fs::read_to_string(pv_path)?, p_max)?;
    let nwp = parse_nwp_csv(&fs::read_to_string(nwp_path)?)?;
    Ok((pv, nwp))
}

impl RawPvSeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{PV_HEADER}")?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            let _ = write!(line, "{},{}", format_timestamp(r.minute), r.power_w);
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}

impl RawNwpSeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "{NWP_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                format_timestamp(r.minute),
                r.temp_c,
                r.pressure_kpa,
                r.ghi_wm2,
                r.wind_ms,
                r.rh_pct
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
