//! Sliding-window training examples.

use crate::dataset::binning::{expected_value, BinnedDistribution};
use crate::dataset::consolidate::{AlignedDataset, CHANNELS, GRID_MINUTES, NWP_CHANNELS, STEPS_PER_HOUR};
use crate::dataset::series::{format_timestamp, Minute};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Window geometry for sample extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    /// 15-minute input steps; 480 is five days.
    pub input_steps: usize,
    /// Forecast hours.
    pub horizon: usize,
    pub stride_hours: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { input_steps: 5 * 24 * STEPS_PER_HOUR, horizon: 24, stride_hours: 24 }
    }
}

impl WindowSpec {
    /// Earliest hour index that has a full input window and a full
    /// persistence history behind it.
    fn first_anchor_hour(&self) -> usize {
        self.input_steps.div_ceil(STEPS_PER_HOUR).max(self.horizon)
    }
}

/// One forecast problem anchored at an hour boundary `t₀`.
#[derive(Clone, Debug)]
pub struct Sample {
    pub anchor: Minute,
    /// Normalized channels `[input_steps, 6]` covering the window that ends at `t₀`.
    pub input: Tensor,
    /// Observed hourly distributions for the `horizon` hours ending at `t₀`;
    /// the last one is `P(0)`.
    pub history_pdf: Vec<BinnedDistribution>,
    /// Hours `t₀+1 … t₀+horizon`. Empty when the future is not observed.
    pub target_pdf: Vec<BinnedDistribution>,
    pub target_e: Vec<f64>,
    /// Normalized NWP channels averaged over each forecast hour.
    pub future_nwp: Vec<[f64; NWP_CHANNELS]>,
}

impl Sample {
    pub fn input_steps(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn horizon(&self) -> usize {
        self.history_pdf.len()
    }

    pub fn has_targets(&self) -> bool {
        !self.target_pdf.is_empty()
    }

    /// The last observed hour, `P(0)`.
    pub fn last_observed(&self) -> &BinnedDistribution {
        self.history_pdf.last().expect("history is never empty")
    }

    /// `[t₀ − window, t₀ + horizon)` in minutes.
    pub fn span(&self) -> (Minute, Minute) {
        (self.anchor - self.input_steps() as i64 * GRID_MINUTES, self.target_end())
    }

    /// `[t₀, t₀ + horizon)` in minutes.
    pub fn target_span(&self) -> (Minute, Minute) {
        (self.anchor, self.target_end())
    }

    fn target_end(&self) -> Minute {
        self.anchor + self.horizon() as i64 * 60
    }
}

/// Builds the sample anchored at `anchor`. Targets are filled when the data
/// covers the forecast hours, left empty otherwise.
pub fn sample_at(data: &AlignedDataset, anchor: Minute, spec: &WindowSpec) -> Result<Sample> {
    let off = anchor - data.start;
    if off < 0 || off % 60 != 0 {
        return Err(Error::Data(format!("{} is not an hour inside the data", format_timestamp(anchor))));
    }
    let hour = (off / 60) as usize;
    if hour < spec.first_anchor_hour() || hour > data.hours() {
        return Err(Error::Data(format!(
            "{} lacks a full {}-step history window",
            format_timestamp(anchor),
            spec.input_steps
        )));
    }
    let step = hour * STEPS_PER_HOUR;
    let mut values = Vec::with_capacity(spec.input_steps * CHANNELS);
    for i in step - spec.input_steps..step {
        values.extend_from_slice(&data.normalized(i));
    }
    let input = Tensor::new([spec.input_steps, CHANNELS], values)?;
    let history_pdf = data.hourly[hour - spec.horizon..hour].to_vec();
    let (target_pdf, future_nwp) = if hour + spec.horizon <= data.hours() {
        let targets = data.hourly[hour..hour + spec.horizon].to_vec();
        let nwp = (hour..hour + spec.horizon)
            .map(|h| {
                let mut acc = [0.0; NWP_CHANNELS];
                for s in h * STEPS_PER_HOUR..(h + 1) * STEPS_PER_HOUR {
                    let row = data.normalized(s);
                    for c in 0..NWP_CHANNELS {
                        acc[c] += row[c] / STEPS_PER_HOUR as f64;
                    }
                }
                acc
            })
            .collect();
        (targets, nwp)
    } else {
        (Vec::new(), Vec::new())
    };
    let target_e = target_pdf.iter().map(expected_value).collect();
    Ok(Sample { anchor, input, history_pdf, target_pdf, target_e, future_nwp })
}

/// One sample every `stride_hours`, starting at the first hour with a full
/// input window, while the forecast hours stay inside the data.
pub fn make_samples(data: &AlignedDataset, spec: &WindowSpec) -> Vec<Sample> {
    anchors(data, spec)
        .map(|a| sample_at(data, a, spec).expect("anchor inside data"))
        .collect()
}

pub fn anchors(data: &AlignedDataset, spec: &WindowSpec) -> impl Iterator<Item = Minute> {
    let first = spec.first_anchor_hour();
    let stride = spec.stride_hours.max(1);
    let count = match data.hours().checked_sub(spec.horizon) {
        Some(last) if last >= first => (last - first) / stride + 1,
        _ => 0,
    };
    let start = data.start;
    (0..count).map(move |k| start + (first + k * stride) as i64 * 60)
}
