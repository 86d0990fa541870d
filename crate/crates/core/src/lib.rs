//! Probabilistic day-ahead PV power forecasting.
//!
//! The crate builds everything from `f64` tensors up: a tape autograd
//! ([`graph`]), dense, LSTM and attention layers ([`layers`]), the
//! persistence, FFNN, LSTM, S2S and S2S-Attn forecasters ([`models`]), data
//! preparation ([`dataset`]), training with Nesterov SGD and checkpoints
//! ([`training`]) and the evaluation metrics ([`metrics`]).
//!
//! ```
//! use pvcast::dataset::{consolidate, make_samples, synth_generate, WindowSpec};
//! use pvcast::models::{build_model, Family, ModelConfig, TargetMode};
//!
//! let (pv, nwp) = synth_generate(7, 0, 5000.0)?;
//! let data = consolidate(&pv, &nwp)?;
//! let samples = make_samples(&data, &WindowSpec::default());
//! let cfg = ModelConfig { units: 8, ..ModelConfig::published(Family::S2sAttn, TargetMode::Pdf) };
//! let forecasts = build_model(&cfg)?.forecast(&samples[0])?;
//! assert_eq!(forecasts.steps(), 24);
//! # Ok::<(), pvcast::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod graph;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod training;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};

/// The guide's snippets, compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/autograd.md")]
    mod autograd {}
    #[doc = include_str!("../../../book/src/layers.md")]
    mod layers {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
