//! Plain `key = value` record of how a dataset was prepared.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::consolidate::{AlignedDataset, Normalization, CHANNELS, CHANNEL_NAMES};
use crate::dataset::split::{Split, SplitConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub p_max: f64,
    pub norm: Normalization,
    pub split_seed: u64,
    pub split_block_len: usize,
    pub discarded: usize,
    pub counts: [usize; 3],
}

impl DatasetManifest {
    pub fn new(data: &AlignedDataset, cfg: &SplitConfig, split: &Split) -> Self {
        Self {
            p_max: data.p_max,
            norm: data.norm.clone(),
            split_seed: cfg.seed,
            split_block_len: cfg.block_len,
            discarded: split.discarded,
            counts: [split.train.len(), split.validation.len(), split.test.len()],
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p_max = {:?}", self.p_max);
        for c in 0..CHANNELS {
            let _ = writeln!(s, "norm.{}.min = {:?}", CHANNEL_NAMES[c], self.norm.min[c]);
            let _ = writeln!(s, "norm.{}.max = {:?}", CHANNEL_NAMES[c], self.norm.max[c]);
        }
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "split_block_len = {}", self.split_block_len);
        let _ = writeln!(s, "discarded = {}", self.discarded);
        let _ = writeln!(s, "train_samples = {}", self.counts[0]);
        let _ = writeln!(s, "val_samples = {}", self.counts[1]);
        let _ = writeln!(s, "test_samples = {}", self.counts[2]);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Format(format!("manifest lacks `{k}`")));
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad number for `{k}`")))
        };
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad integer for `{k}`")))
        };
        let mut norm = Normalization { min: [0.0; CHANNELS], max: [0.0; CHANNELS] };
        for c in 0..CHANNELS {
            norm.min[c] = num(&format!("norm.{}.min", CHANNEL_NAMES[c]))?;
            norm.max[c] = num(&format!("norm.{}.max", CHANNEL_NAMES[c]))?;
        }
        Ok(Self {
            p_max: num("p_max")?,
            norm,
            split_seed: int("split_seed")? as u64,
            split_block_len: int("split_block_len")?,
            discarded: int("discarded")?,
            counts: [int("train_samples")?, int("val_samples")?, int("test_samples")?],
        })
    }
}

/// Reads `key = value` lines; `#` starts a comment, surrounding quotes are
/// stripped from values.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key=value, got `{line}`") })?;
        out.insert(k.trim().to_string(), v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}
