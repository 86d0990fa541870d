//! The nine evaluated forecasters: persistence plus feed-forward, LSTM,
//! encoder-decoder and attention encoder-decoder networks, each predicting
//! either a binned distribution or an expected value per hour.

mod config;
mod forecast;
mod model;

pub use config::{published_units, AttentionProjection, Family, ModelConfig, TargetMode};
pub use forecast::{persistence_forecast, Forecast};
pub use model::{build_model, count_parameters, Batch, DecodeMode, DecoderTrace, FeedSource, Model};
