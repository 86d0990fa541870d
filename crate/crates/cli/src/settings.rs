//! The `--config` file: training settings plus data and architecture knobs.

use std::path::Path;

use pvcast::dataset::manifest::parse_key_values;
use pvcast::dataset::{SplitConfig, WindowSpec};
use pvcast::metrics::NrmseForm;
use pvcast::models::{published_units, AttentionProjection, Family, ModelConfig, TargetMode};
use pvcast::training::TrainConfig;
use pvcast::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    /// Rated power; read from the data directory when absent.
    pub p_max: Option<f64>,
    /// Units per layer; the published per-model values when absent.
    pub units: Option<usize>,
    pub depth: usize,
    pub input_steps: usize,
    pub stride_hours: usize,
    pub split_seed: u64,
    pub block_len: usize,
    pub model_seed: u64,
    pub decoder_future_nwp: bool,
    pub attention_projection: AttentionProjection,
    pub nrmse_form: NrmseForm,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            p_max: None,
            units: None,
            depth: 2,
            input_steps: WindowSpec::default().input_steps,
            stride_hours: WindowSpec::default().stride_hours,
            split_seed: 0,
            block_len: 1,
            model_seed: 0,
            decoder_future_nwp: false,
            attention_projection: AttentionProjection::Minimal,
            nrmse_form: NrmseForm::AsPrinted,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunSettings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (k, v) in parse_key_values(text)? {
            if s.train.set(&k, &v)? {
                continue;
            }
            match k.as_str() {
                "p_max" => s.p_max = Some(num(&k, &v)?),
                "units" => s.units = Some(num(&k, &v)?),
                "depth" => s.depth = num(&k, &v)?,
                "input_steps" => s.input_steps = num(&k, &v)?,
                "stride_hours" => s.stride_hours = num(&k, &v)?,
                "split_seed" => s.split_seed = num(&k, &v)?,
                "block_len" => s.block_len = num(&k, &v)?,
                "model_seed" => s.model_seed = num(&k, &v)?,
                "decoder_future_nwp" => s.decoder_future_nwp = num(&k, &v)?,
                "attention_projection" => s.attention_projection = v.parse()?,
                "nrmse" => {
                    s.nrmse_form = match v.as_str() {
                        "as_printed" => NrmseForm::AsPrinted,
                        "conventional" => NrmseForm::Conventional,
                        _ => return Err(Error::Config(format!("unknown nrmse form `{v}`"))),
                    }
                }
                _ => return Err(Error::Config(format!("unknown setting `{k}`"))),
            }
        }
        s.train.validate()?;
        if s.input_steps == 0 || s.stride_hours == 0 || s.block_len == 0 {
            return Err(Error::Config("input_steps, stride_hours and block_len must be positive".into()));
        }
        Ok(s)
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec { input_steps: self.input_steps, horizon: 24, stride_hours: self.stride_hours }
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig { seed: self.split_seed, block_len: self.block_len, ..SplitConfig::default() }
    }

    pub fn model(&self, family: Family, mode: TargetMode) -> ModelConfig {
        ModelConfig {
            units: self.units.unwrap_or_else(|| published_units(family, mode)),
            depth: self.depth,
            input_steps: self.input_steps,
            decoder_future_nwp: self.decoder_future_nwp,
            attention_projection: self.attention_projection,
            seed: self.model_seed,
            ..ModelConfig::published(family, mode)
        }
    }
}
