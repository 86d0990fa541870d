//! Ingestion, consolidation, probabilistic targets, windows and splits.

pub mod binning;
pub mod consolidate;
pub mod manifest;
pub mod samples;
pub mod series;
pub mod split;
pub mod synth;

pub use binning::{bin_distribution, expected_value, BinnedDistribution, DEFAULT_BINS};
pub use consolidate::{consolidate, consolidate_with_bins, AlignedDataset, Normalization, CHANNELS};
pub use manifest::DatasetManifest;
pub use samples::{make_samples, sample_at, Sample, WindowSpec};
pub use series::{ingest_csv, Minute, RawNwpSeries, RawPvSeries};
pub use split::{split, Split, SplitConfig, SplitKind};
pub use synth::synth_generate;

use crate::error::Result;

/// Splits samples, refits normalization on the training windows only, and
/// rebuilds every kept sample with those constants.
pub fn prepare(
    data: &mut AlignedDataset,
    window: &WindowSpec,
    split_cfg: &SplitConfig,
) -> Result<(Split, DatasetManifest)> {
    let probe = make_samples(data, window);
    let assigned = split(probe, split_cfg)?;
    let ranges: Vec<_> = assigned
        .train
        .iter()
        .map(|s| {
            let end = data.step_of(s.anchor).expect("anchor on grid");
            end - window.input_steps..end
        })
        .collect();
    if !ranges.is_empty() {
        data.refit_normalization(&ranges);
    }
    let rebuild = |v: &[Sample]| -> Result<Vec<Sample>> {
        v.iter().map(|s| sample_at(data, s.anchor, window)).collect()
    };
    let out = Split {
        train: rebuild(&assigned.train)?,
        validation: rebuild(&assigned.validation)?,
        test: rebuild(&assigned.test)?,
        discarded: assigned.discarded,
        assignment: assigned.assignment,
    };
    let manifest = DatasetManifest::new(data, split_cfg, &out);
    Ok((out, manifest))
}
