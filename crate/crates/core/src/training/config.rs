use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataset::manifest::parse_key_values;
use crate::error::{Error, Result};
use crate::training::loss::EPSILON_FLOOR;

/// Optimization and stopping settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub epsilon_floor: f64,
    /// Global gradient-norm limit; off unless set.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            momentum: 0.75,
            batch_size: 128,
            patience: 15,
            max_epochs: 500,
            seed: 0,
            epsilon_floor: EPSILON_FLOOR,
            grad_clip: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience, batch_size and max_epochs must be at least 1".into()));
        }
        if !(self.epsilon_floor > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate and epsilon_floor must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Returns `false` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "learning_rate" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "epsilon_floor" => self.epsilon_floor = num(key, value)?,
            "grad_clip" => {
                self.grad_clip = match value {
                    "" | "off" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Builds a config from defaults plus the recognized keys of `kv`,
    /// leaving other keys to the caller.
    pub fn from_map(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in kv {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Strict parse: every key must be a training setting.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(text)? {
            if !cfg.set(&k, &v)? {
                return Err(Error::Config(format!("unknown training setting `{k}`")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "momentum = {:?}", self.momentum);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "epsilon_floor = {:?}", self.epsilon_floor);
        let _ = writeln!(s, "grad_clip = {}", self.grad_clip.map_or("off".to_string(), |c| format!("{c:?}")));
        s
    }
}
