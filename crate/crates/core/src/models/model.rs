use crate::dataset::consolidate::NWP_CHANNELS;
use crate::dataset::{expected_value, BinnedDistribution, Sample};
use crate::error::{contract_err, shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{
    Activation, AttentionLayer, DenseLayer, LstmLayer, LstmState, Projection, TemporalTransform,
};
use crate::models::config::{AttentionProjection, Family, ModelConfig, TargetMode};
use crate::models::forecast::{persistence_forecast, Forecast};
use crate::params::{Initializer, ParamStore};
use crate::tensor::Tensor;

/// Samples per graph when forecasting without gradients.
const INFERENCE_CHUNK: usize = 64;

/// How the decoder obtains its input after the first step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    /// Step `t` reads the observed `P(t−1)`.
    TeacherForcing,
    /// Step `t` reads the model's own `F(t−1)`.
    SelfRecurrent,
}

/// Where one decoder step's input came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedSource {
    /// `P(0)`, the last observed hour.
    LastObserved,
    /// An observed target hour.
    Observed,
    /// The model's previous output.
    Model,
}

/// Records the feed source of every decoder step it sees.
#[derive(Clone, Debug, Default)]
pub struct DecoderTrace {
    pub feeds: Vec<FeedSource>,
}

impl DecoderTrace {
    pub fn consumed_model_output(&self) -> bool {
        self.feeds.contains(&FeedSource::Model)
    }
}

/// Stacked samples ready for a forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    size: usize,
    /// `[B, input_steps, features]`.
    window: Tensor,
    /// `P(0)` in the model's output encoding, `[B, width]`.
    first_feed: Tensor,
    /// Observed hours in output encoding, each `[B, width]`; empty without targets.
    observed: Vec<Tensor>,
    /// NWP channels of each forecast hour, each `[B, 5]`; empty without targets.
    future_nwp: Vec<Tensor>,
    /// `[B, output_steps, width]`.
    target: Option<Tensor>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn target(&self) -> Option<&Tensor> {
        self.target.as_ref()
    }

    fn input_step(&self, t: usize) -> Tensor {
        let s = self.window.shape();
        let (steps, feat) = (s[1], s[2]);
        let mut out = Vec::with_capacity(self.size * feat);
        for b in 0..self.size {
            let base = (b * steps + t) * feat;
            out.extend_from_slice(&self.window.values()[base..base + feat]);
        }
        Tensor::new([self.size, feat], out).expect("consistent batch")
    }
}

#[derive(Clone, Debug)]
enum Arch {
    Persistence,
    OneBlock { body: Body, head: TemporalTransform },
    EncoderDecoder(Box<EncoderDecoder>),
}

#[derive(Clone, Debug)]
enum Body {
    /// Dense layers shared across time steps.
    Dense(Vec<DenseLayer>),
    Lstm(Vec<LstmLayer>),
}

#[derive(Clone, Debug)]
struct EncoderDecoder {
    encoder: Vec<LstmLayer>,
    decoder: Vec<LstmLayer>,
    /// One per decoder layer, or empty without attention.
    attention: Vec<AttentionLayer>,
    output: DenseLayer,
}

/// A forecaster: configuration, parameters and wiring.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    arch: Arch,
}

/// Builds and initializes a model from `config.seed`.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    if config.family == Family::Persistence {
        return Ok(Model { config: config.clone(), params: ParamStore::new(), arch: Arch::Persistence });
    }
    config.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::new(config.seed);
    let (u, w) = (config.units, config.output_width());
    let head_act = match config.target_mode {
        TargetMode::Pdf => Activation::Softmax,
        TargetMode::Expected => Activation::Sigmoid,
    };
    let lstm_stack = |store: &mut ParamStore, init: &mut Initializer, name: &str, first_in: usize| {
        (0..config.depth)
            .map(|j| {
                let width = if j == 0 { first_in } else { u };
                LstmLayer::new(store, init, &format!("{name}.{j}"), width, u)
            })
            .collect::<Vec<_>>()
    };
    let arch = match config.family {
        Family::Persistence => unreachable!(),
        Family::Ffnn | Family::Lstm => {
            let body = if config.family == Family::Ffnn {
                Body::Dense(
                    (0..config.depth)
                        .map(|j| {
                            let width = if j == 0 { config.input_features } else { u };
                            DenseLayer::new(&mut store, &mut init, &format!("hidden.{j}"), width, u, Activation::Tanh)
                        })
                        .collect(),
                )
            } else {
                Body::Lstm(lstm_stack(&mut store, &mut init, "lstm", config.input_features))
            };
            let head = TemporalTransform::new(
                &mut store,
                &mut init,
                "head",
                config.input_steps,
                config.output_steps,
                u,
                w,
                head_act,
            );
            Arch::OneBlock { body, head }
        }
        Family::S2s | Family::S2sAttn => {
            let attn = config.family == Family::S2sAttn;
            let x_width = config.decoder_input_width();
            let encoder = lstm_stack(&mut store, &mut init, "encoder", config.input_features);
            let decoder = (0..config.depth)
                .map(|j| {
                    let below = if j == 0 { x_width } else { u };
                    let width = if attn { below + u } else { below };
                    LstmLayer::new(&mut store, &mut init, &format!("decoder.{j}"), width, u)
                })
                .collect();
            let attention = if attn {
                (0..config.depth)
                    .map(|j| {
                        let name = format!("attention.{j}");
                        let q_in = if j == 0 { x_width + u } else { u };
                        let mut dense = |role: &str, input: usize| {
                            Projection::linear(&mut store, &mut init, &format!("{name}.{role}"), input, u)
                        };
                        match config.attention_projection {
                            AttentionProjection::Minimal => {
                                let query = if j == 0 { dense("query", q_in) } else { Projection::Identity };
                                AttentionLayer::new(query, Projection::Identity, Projection::Identity)
                            }
                            AttentionProjection::Full => {
                                let query = dense("query", q_in);
                                let key = dense("key", u);
                                let value = dense("value", u);
                                AttentionLayer::new(query, key, value)
                            }
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let output = DenseLayer::new(&mut store, &mut init, "output", u, w, head_act);
            Arch::EncoderDecoder(Box::new(EncoderDecoder { encoder, decoder, attention, output }))
        }
    };
    Ok(Model { config: config.clone(), params: store, arch })
}

/// Exact number of trainable scalars.
pub fn count_parameters(model: &Model) -> usize {
    model.params.scalar_count()
}

impl Model {
    pub fn name(&self) -> String {
        self.config.name()
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self.arch, Arch::Persistence)
    }

    /// Output encoding of one observed hour.
    fn encode(&self, d: &BinnedDistribution) -> Vec<f64> {
        match self.config.target_mode {
            TargetMode::Pdf => d.probs().to_vec(),
            TargetMode::Expected => vec![expected_value(d)],
        }
    }

    /// Stacks samples for a forward pass. Targets are included only when
    /// every sample has them.
    pub fn batch<'s>(&self, samples: impl IntoIterator<Item = &'s Sample>) -> Result<Batch> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        let cfg = &self.config;
        if samples.is_empty() {
            return Err(contract_err("empty batch"));
        }
        let (w, h) = (cfg.output_width(), cfg.output_steps);
        let mut window = Vec::with_capacity(samples.len() * cfg.input_steps * cfg.input_features);
        let mut first_feed = Vec::with_capacity(samples.len() * w);
        for s in &samples {
            if s.input.shape() != [cfg.input_steps, cfg.input_features] {
                return Err(shape_err(format!(
                    "sample input {:?} does not match [{}, {}]",
                    s.input.shape(),
                    cfg.input_steps,
                    cfg.input_features
                )));
            }
            if s.horizon() != h || s.last_observed().bins() != cfg.bins {
                return Err(shape_err(format!(
                    "sample has {} hours of {} bins, model expects {h} of {}",
                    s.horizon(),
                    s.last_observed().bins(),
                    cfg.bins
                )));
            }
            window.extend_from_slice(s.input.values());
            first_feed.extend(self.encode(s.last_observed()));
        }
        let b = samples.len();
        let with_targets = samples.iter().all(|s| s.has_targets());
        let (observed, future_nwp, target) = if with_targets {
            let observed: Vec<Tensor> = (0..h)
                .map(|t| {
                    let v = samples.iter().flat_map(|s| self.encode(&s.target_pdf[t])).collect();
                    Tensor::new([b, w], v)
                })
                .collect::<Result<_>>()?;
            let nwp: Vec<Tensor> = (0..h)
                .map(|t| {
                    let v = samples.iter().flat_map(|s| s.future_nwp[t]).collect();
                    Tensor::new([b, NWP_CHANNELS], v)
                })
                .collect::<Result<_>>()?;
            let mut tv = Vec::with_capacity(b * h * w);
            for s in &samples {
                for d in &s.target_pdf {
                    tv.extend(self.encode(d));
                }
            }
            (observed, nwp, Some(Tensor::new([b, h, w], tv)?))
        } else {
            (Vec::new(), Vec::new(), None)
        };
        Ok(Batch {
            size: b,
            window: Tensor::new([b, cfg.input_steps, cfg.input_features], window)?,
            first_feed: Tensor::new([b, w], first_feed)?,
            observed,
            future_nwp,
            target,
        })
    }

    /// Runs the network on `g`, returning `[B, output_steps, width]`.
    /// One-block families ignore `mode`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        batch: &Batch,
        mode: DecodeMode,
        mut trace: Option<&mut DecoderTrace>,
    ) -> Result<Var> {
        match &self.arch {
            Arch::Persistence => Err(contract_err("persistence has no network to run")),
            Arch::OneBlock { body, head } => {
                let features = match body {
                    Body::Dense(layers) => {
                        let mut x = g.constant(batch.window.clone());
                        for layer in layers {
                            x = layer.forward(g, x)?;
                        }
                        x
                    }
                    Body::Lstm(layers) => {
                        let steps = batch.window.shape()[1];
                        let (_, outputs) = run_stack(g, layers, batch, steps, true)?;
                        g.concat(&outputs, 1)?
                    }
                };
                head.forward(g, features)
            }
            Arch::EncoderDecoder(ed) => {
                let cfg = &self.config;
                let steps = batch.window.shape()[1];
                let attn = !ed.attention.is_empty();
                let (mut states, enc_out) = run_stack(g, &ed.encoder, batch, steps, attn)?;
                let memory = if attn {
                    let keys = g.concat(&enc_out, 1)?;
                    ed.attention.iter().map(|a| a.project_memory(g, keys, keys)).collect::<Result<Vec<_>>>()?
                } else {
                    Vec::new()
                };
                if mode == DecodeMode::TeacherForcing && batch.observed.is_empty() {
                    return Err(contract_err("teacher forcing needs observed targets"));
                }
                if cfg.decoder_future_nwp && batch.future_nwp.is_empty() {
                    return Err(contract_err("future NWP decoder inputs are not available for this batch"));
                }
                let (b, u, w) = (batch.size, cfg.units, cfg.output_width());
                let mut feed = g.constant(batch.first_feed.clone());
                let mut source = FeedSource::LastObserved;
                let mut outputs = Vec::with_capacity(cfg.output_steps);
                for t in 0..cfg.output_steps {
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.feeds.push(source);
                    }
                    let input = if cfg.decoder_future_nwp {
                        let nwp = g.constant(batch.future_nwp[t].clone());
                        g.concat(&[feed, nwp], 1)?
                    } else {
                        feed
                    };
                    let mut below = input;
                    for (j, layer) in ed.decoder.iter().enumerate() {
                        let layer_in = if attn {
                            let query = if j == 0 { g.concat(&[input, states[0].h], 1)? } else { states[j].h };
                            let (keys, values) = memory[j];
                            let ctx = ed.attention[j].attend_step(g, query, keys, values)?.context;
                            g.concat(&[ctx, below], 1)?
                        } else {
                            below
                        };
                        states[j] = layer.step(g, layer_in, states[j])?;
                        below = states[j].h;
                    }
                    debug_assert_eq!(g.shape(below), [b, u]);
                    let out = ed.output.forward(g, below)?;
                    outputs.push(g.reshape(out, &[b, 1, w])?);
                    (feed, source) = match mode {
                        DecodeMode::TeacherForcing => {
                            (g.constant(batch.observed[t].clone()), FeedSource::Observed)
                        }
                        DecodeMode::SelfRecurrent => (out, FeedSource::Model),
                    };
                }
                g.concat(&outputs, 1)
            }
        }
    }

    /// Self-recurrent forecasts for every sample.
    pub fn forecast_batch(&self, samples: &[Sample]) -> Result<Vec<Forecast>> {
        self.forecast_with(samples, DecodeMode::SelfRecurrent)
    }

    pub fn forecast(&self, sample: &Sample) -> Result<Forecast> {
        self.forecast_with(std::slice::from_ref(sample), DecodeMode::SelfRecurrent)
            .map(|mut v| v.remove(0))
    }

    /// Forecasts under an explicit decoding mode.
    pub fn forecast_with(&self, samples: &[Sample], mode: DecodeMode) -> Result<Vec<Forecast>> {
        if let Arch::Persistence = self.arch {
            return samples.iter().map(|s| persistence_forecast(&s.history_pdf)).collect();
        }
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(INFERENCE_CHUNK) {
            let batch = self.batch(chunk)?;
            let mut g = Graph::new(&self.params);
            let y = self.forward_graph(&mut g, &batch, mode, None)?;
            out.extend(self.decode_output(g.value(y))?);
        }
        Ok(out)
    }

    /// Splits a `[B, steps, width]` output into forecasts.
    pub fn decode_output(&self, y: &Tensor) -> Result<Vec<Forecast>> {
        let s = y.shape();
        if s.len() != 3 || s[2] != self.config.output_width() {
            return Err(shape_err(format!("model output {s:?}")));
        }
        let (steps, w) = (s[1], s[2]);
        y.values()
            .chunks(steps * w)
            .map(|rows| match self.config.target_mode {
                TargetMode::Pdf => rows
                    .chunks(w)
                    .map(|p| BinnedDistribution::new(p.to_vec()))
                    .collect::<Result<_>>()
                    .map(Forecast::Pdf),
                TargetMode::Expected => Ok(Forecast::Expected(rows.to_vec())),
            })
            .collect()
    }
}

/// Runs a stack of LSTM layers over the batch's input steps. Returns the
/// final states and, when `collect` is set, the top layer's outputs as
/// `[B, 1, units]` pieces ready to concatenate along time.
fn run_stack(
    g: &mut Graph,
    layers: &[LstmLayer],
    batch: &Batch,
    steps: usize,
    collect: bool,
) -> Result<(Vec<LstmState>, Vec<Var>)> {
    if layers.is_empty() {
        return Err(Error::Config("a recurrent block needs at least one layer".into()));
    }
    let b = batch.size;
    let mut states: Vec<LstmState> = layers.iter().map(|l| l.zero_state(g, b)).collect();
    let mut outputs = Vec::with_capacity(if collect { steps } else { 0 });
    for t in 0..steps {
        let mut x = g.constant(batch.input_step(t));
        for (state, layer) in states.iter_mut().zip(layers) {
            *state = layer.step(g, x, *state)?;
            x = state.h;
        }
        if collect {
            let u = layers[layers.len() - 1].units();
            outputs.push(g.reshape(x, &[b, 1, u])?);
        }
    }
    Ok((states, outputs))
}
