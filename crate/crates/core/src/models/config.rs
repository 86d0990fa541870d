use std::fmt;
use std::str::FromStr;

use crate::dataset::manifest::parse_key_values;
use crate::dataset::{CHANNELS, DEFAULT_BINS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Persistence,
    Ffnn,
    Lstm,
    S2s,
    S2sAttn,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Persistence, Family::Ffnn, Family::Lstm, Family::S2s, Family::S2sAttn];

    pub fn key(self) -> &'static str {
        match self {
            Family::Persistence => "persistence",
            Family::Ffnn => "ffnn",
            Family::Lstm => "lstm",
            Family::S2s => "s2s",
            Family::S2sAttn => "s2s_attn",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Family::Persistence => "Persistence",
            Family::Ffnn => "FFNN",
            Family::Lstm => "LSTM",
            Family::S2s => "S2S",
            Family::S2sAttn => "S2S-Attn",
        }
    }

    /// Encoder-decoder families, whose decoders read their previous step.
    pub fn is_encoder_decoder(self) -> bool {
        matches!(self, Family::S2s | Family::S2sAttn)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "persistence" => Ok(Family::Persistence),
            "ffnn" => Ok(Family::Ffnn),
            "lstm" => Ok(Family::Lstm),
            "s2s" => Ok(Family::S2s),
            "s2s_attn" => Ok(Family::S2sAttn),
            _ => Err(Error::Config(format!(
                "unknown model family `{s}` (expected persistence, ffnn, lstm, s2s or s2s_attn)"
            ))),
        }
    }
}

/// What each forecast step predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TargetMode {
    /// A binned distribution, trained with KL divergence.
    Pdf,
    /// The expected value, trained with squared error.
    Expected,
}

impl TargetMode {
    pub fn key(self) -> &'static str {
        match self {
            TargetMode::Pdf => "pdf",
            TargetMode::Expected => "E",
        }
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdf" | "PDF" => Ok(TargetMode::Pdf),
            "E" | "e" | "expected" => Ok(TargetMode::Expected),
            _ => Err(Error::Config(format!("unknown target mode `{s}` (expected pdf or E)"))),
        }
    }
}

/// How the attention layers project queries, keys and values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionProjection {
    /// Only the first decoder layer learns a query projection, mapping its
    /// wider query onto the encoder width; keys, values and deeper queries
    /// are used as they are.
    Minimal,
    /// Every query, key and value passes through its own dense projection.
    Full,
}

impl AttentionProjection {
    pub fn key(self) -> &'static str {
        match self {
            AttentionProjection::Minimal => "minimal",
            AttentionProjection::Full => "full",
        }
    }
}

impl FromStr for AttentionProjection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimal" => Ok(AttentionProjection::Minimal),
            "full" => Ok(AttentionProjection::Full),
            _ => Err(Error::Config(format!("unknown attention projection `{s}`"))),
        }
    }
}

/// Architecture of one forecaster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub family: Family,
    pub target_mode: TargetMode,
    pub units: usize,
    /// Stacked layers per block.
    pub depth: usize,
    pub input_features: usize,
    /// 15-minute steps in the input window.
    pub input_steps: usize,
    /// Forecast hours.
    pub output_steps: usize,
    pub bins: usize,
    /// Append the forecast hour's NWP channels to every decoder input.
    pub decoder_future_nwp: bool,
    pub attention_projection: AttentionProjection,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size configuration with the published units per layer.
    pub fn published(family: Family, target_mode: TargetMode) -> Self {
        Self {
            family,
            target_mode,
            units: published_units(family, target_mode),
            depth: 2,
            input_features: CHANNELS,
            input_steps: 480,
            output_steps: 24,
            bins: DEFAULT_BINS,
            decoder_future_nwp: false,
            attention_projection: AttentionProjection::Minimal,
            seed: 0,
        }
    }

    /// Display name such as `S2S-Attn-pdf`; persistence has no mode suffix.
    pub fn name(&self) -> String {
        match self.family {
            Family::Persistence => "Persistence".to_string(),
            f => format!("{}-{}", f.label(), self.target_mode.key()),
        }
    }

    /// Values per forecast step.
    pub fn output_width(&self) -> usize {
        match self.target_mode {
            TargetMode::Pdf => self.bins,
            TargetMode::Expected => 1,
        }
    }

    /// Width of the decoder's per-step input.
    pub fn decoder_input_width(&self) -> usize {
        let nwp = if self.decoder_future_nwp { self.input_features - 1 } else { 0 };
        self.output_width() + nwp
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("units", self.units),
            ("depth", self.depth),
            ("input_features", self.input_features),
            ("input_steps", self.input_steps),
            ("output_steps", self.output_steps),
            ("bins", self.bins),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.decoder_future_nwp && self.input_features != CHANNELS {
            return Err(Error::Config(format!(
                "future NWP decoder inputs need {CHANNELS} input features, got {}",
                self.input_features
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "family = {}\ntarget_mode = {}\nunits = {}\ndepth = {}\ninput_features = {}\n\
             input_steps = {}\noutput_steps = {}\nbins = {}\ndecoder_future_nwp = {}\n\
             attention_projection = {}\nseed = {}\n",
            self.family.key(),
            self.target_mode.key(),
            self.units,
            self.depth,
            self.input_features,
            self.input_steps,
            self.output_steps,
            self.bins,
            self.decoder_future_nwp,
            self.attention_projection.key(),
            self.seed,
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| Error::Config(format!("missing `{k}`")));
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Config(format!("`{k}` must be a non-negative integer")))
        };
        let cfg = Self {
            family: get("family")?.parse()?,
            target_mode: get("target_mode")?.parse()?,
            units: int("units")?,
            depth: int("depth")?,
            input_features: int("input_features")?,
            input_steps: int("input_steps")?,
            output_steps: int("output_steps")?,
            bins: int("bins")?,
            decoder_future_nwp: get("decoder_future_nwp")?
                .parse()
                .map_err(|_| Error::Config("`decoder_future_nwp` must be true or false".into()))?,
            attention_projection: get("attention_projection")?.parse()?,
            seed: get("seed")?.parse().map_err(|_| Error::Config("`seed` must be an integer".into()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Units per layer that bring each variant to roughly the same budget.
pub fn published_units(family: Family, mode: TargetMode) -> usize {
    use Family::*;
    use TargetMode::*;
    match (family, mode) {
        (Persistence, _) => 0,
        (Ffnn, Expected) => 640,
        (Ffnn, Pdf) => 616,
        (Lstm, _) => 184,
        (S2s, Expected) => 132,
        (S2s, Pdf) => 128,
        (S2sAttn, Expected) => 115,
        (S2sAttn, Pdf) => 110,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(ModelConfig::published(Family::S2sAttn, TargetMode::Pdf).name(), "S2S-Attn-pdf");
        assert_eq!(ModelConfig::published(Family::Ffnn, TargetMode::Expected).name(), "FFNN-E");
        assert_eq!(ModelConfig::published(Family::Persistence, TargetMode::Pdf).name(), "Persistence");
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = ModelConfig::published(Family::S2s, TargetMode::Expected);
        cfg.seed = 99;
        cfg.decoder_future_nwp = true;
        assert_eq!(ModelConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_family_is_a_config_error() {
        assert!(matches!("transformer".parse::<Family>(), Err(Error::Config(_))));
        assert_eq!("s2s-attn".parse::<Family>().unwrap(), Family::S2sAttn);
    }
}
