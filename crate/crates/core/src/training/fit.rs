use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::metrics::nrmse;
use crate::models::{DecodeMode, DecoderTrace, Model, TargetMode};
use crate::optim::SgdNesterov;
use crate::params::{ParamId, ParamStore};
use crate::training::config::TrainConfig;
use crate::training::loss::{kl_graph, mse_graph};

/// Something [`fit`] can optimize.
pub trait Trainable {
    type Example;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Mean training loss of one mini-batch, built on `g`.
    fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &[&Self::Example],
        cfg: &TrainConfig,
        trace: &mut DecoderTrace,
    ) -> Result<Var>;
    /// The early-stopping monitor; lower is better.
    fn validation_score(&self, examples: &[Self::Example]) -> Result<f64>;
}

impl Trainable for Model {
    type Example = Sample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&Sample], cfg: &TrainConfig, trace: &mut DecoderTrace) -> Result<Var> {
        let b = self.batch(batch.iter().copied())?;
        let target = b.target().ok_or_else(|| Error::Contract("training samples need targets".into()))?.clone();
        let out = self.forward_graph(g, &b, DecodeMode::TeacherForcing, Some(trace))?;
        match self.config.target_mode {
            TargetMode::Pdf => kl_graph(g, out, &target, cfg.epsilon_floor),
            TargetMode::Expected => mse_graph(g, out, &target),
        }
    }

    /// Mean per-window nRMSE of self-recurrent forecasts.
    fn validation_score(&self, samples: &[Sample]) -> Result<f64> {
        let forecasts = self.forecast_batch(samples)?;
        let mut total = 0.0;
        for (f, s) in forecasts.iter().zip(samples) {
            total += nrmse(&f.expected_values(), &s.target_e, 1.0)?;
        }
        Ok(total / samples.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nrmse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// One-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub seconds: f64,
}

impl TrainReport {
    pub fn best_val_nrmse(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_nrmse
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_nrmse\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:?},{:?}", e.epoch, e.train_loss, e.val_nrmse);
        }
        s
    }
}

/// Hooks called during [`fit_with`].
pub trait TrainObserver {
    /// After each mini-batch's forward pass.
    fn on_batch(&mut self, _epoch: usize, _batch: usize, _loss: f64, _trace: &DecoderTrace) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

impl TrainObserver for () {}

pub fn fit<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    val: &[M::Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    fit_with(model, train, val, cfg, &mut ())
}

/// Mini-batch training with teacher forcing and early stopping on the
/// validation score. The best epoch's weights are restored before return.
pub fn fit_with<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    val: &[M::Example],
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Contract("training and validation sets must be nonempty".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optimizer = SgdNesterov::new(cfg.learning_rate, cfg.momentum, model.params())?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    let mut since_best = 0;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut clipped = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |msg: String| Error::Divergence { epoch, batch: bi + 1, msg };
            let batch: Vec<&M::Example> = idx.iter().map(|&i| &train[i]).collect();
            let mut trace = DecoderTrace::default();
            let (loss, grads) = {
                let mut g = Graph::new(model.params());
                let loss = match model.batch_loss(&mut g, &batch, cfg, &mut trace) {
                    Ok(v) => v,
                    Err(Error::Domain(msg)) => return Err(diverged(msg)),
                    Err(e) => return Err(e),
                };
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(diverged(format!("loss is {value}")));
                }
                g.backward(loss).map_err(|e| match e {
                    Error::Domain(msg) => diverged(msg),
                    e => e,
                })?;
                let grads: Vec<(ParamId, Vec<f64>)> =
                    g.param_grads().into_iter().map(|(id, gr)| (id, gr.to_vec())).collect();
                (value, grads)
            };
            observer.on_batch(epoch, bi + 1, loss, &trace);
            let store = model.params_mut();
            store.zero_grads();
            for (id, gr) in &grads {
                store.accumulate_grad(*id, gr)?;
            }
            if let Some(limit) = cfg.grad_clip {
                let norm = store.grad_norm_sq().sqrt();
                if norm > limit {
                    debug!("epoch {epoch} batch {}: clipping gradient norm {norm:.3e} to {limit}", bi + 1);
                    clipped += 1;
                    let scale = limit / norm;
                    for p in store.iter_mut() {
                        if let Some(g) = p.tensor.grad.as_mut() {
                            g.iter_mut().for_each(|x| *x *= scale);
                        }
                    }
                }
            }
            optimizer.step(store)?;
            if store.iter().any(|(_, p)| !p.tensor.all_finite()) {
                return Err(diverged("parameters became non-finite".into()));
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let val_nrmse = match model.validation_score(val) {
            Ok(v) => v,
            Err(Error::Domain(msg)) => return Err(Error::Divergence { epoch, batch: 0, msg }),
            Err(e) => return Err(e),
        };
        let record = EpochRecord { epoch, train_loss: loss_sum / seen as f64, val_nrmse };
        info!("epoch {epoch}: train loss {:.6}, val nRMSE {val_nrmse:.6}", record.train_loss);
        observer.on_epoch(&record);
        epochs.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| val_nrmse < *b) {
            best = Some((val_nrmse, epoch, model.params().snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stop_reason = StopReason::Patience;
                break;
            }
        }
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch ran");
    model.params_mut().restore(&snapshot)?;
    if clipped > 0 {
        warn!("gradient norm clipped in {clipped} batches");
    }
    Ok(TrainReport { epochs, best_epoch, stop_reason, seconds: started.elapsed().as_secs_f64() })
}
