use std::cell::{Cell, RefCell};

use pvcast::dataset::{consolidate, make_samples, synth_generate, Sample, WindowSpec};
use pvcast::graph::{Graph, Var};
use pvcast::models::{build_model, count_parameters, DecodeMode, DecoderTrace, Family, ModelConfig, TargetMode};
use pvcast::params::{ParamId, ParamStore};
use pvcast::tensor::Tensor;
use pvcast::training::checkpoint::{decode, encode, FORMAT_VERSION};
use pvcast::training::{
    fit, fit_with, load_checkpoint, save_checkpoint, Metadata, StopReason, TrainConfig, TrainObserver,
    Trainable,
};
use pvcast::Error;

/// One scalar fitted to a constant target by squared error.
struct Scalar {
    params: ParamStore,
    theta: ParamId,
    /// Scripted validation scores; falls back to the parameter's distance.
    script: Vec<f64>,
    calls: Cell<usize>,
    /// Parameter value at each validation.
    seen: RefCell<Vec<f64>>,
}

impl Scalar {
    fn new(theta: f64, script: Vec<f64>) -> Self {
        let mut params = ParamStore::new();
        let theta = params.add("theta", Tensor::scalar(theta));
        Self { params, theta, script, calls: Cell::new(0), seen: RefCell::default() }
    }

    fn value(&self) -> f64 {
        self.params.get(self.theta).item()
    }
}

impl Trainable for Scalar {
    type Example = f64;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn batch_loss(&self, g: &mut Graph, batch: &[&f64], _: &TrainConfig, _: &mut DecoderTrace) -> pvcast::Result<Var> {
        let n = batch.len();
        let theta = g.param(self.theta);
        let zeros = g.constant(Tensor::zeros([n, 1]));
        let spread = g.add_bias(zeros, theta)?;
        let target = g.constant(Tensor::new([n, 1], batch.iter().map(|&&t| t).collect())?);
        let err = g.sub(spread, target)?;
        let sq = g.mul(err, err)?;
        let total = g.sum(sq)?;
        g.scale(total, 1.0 / n as f64)
    }

    fn validation_score(&self, examples: &[f64]) -> pvcast::Result<f64> {
        let k = self.calls.get();
        self.calls.set(k + 1);
        self.seen.borrow_mut().push(self.value());
        Ok(match self.script.get(k) {
            Some(&v) => v,
            None => (self.value() - examples[0]).abs(),
        })
    }
}

fn quick(cfg: TrainConfig) -> TrainConfig {
    TrainConfig { batch_size: 4, ..cfg }
}

#[test]
fn stops_after_patience_runs_out() {
    let mut m = Scalar::new(0.0, vec![0.5, 0.6, 0.7, 0.8]);
    let cfg = quick(TrainConfig { patience: 1, ..TrainConfig::default() });
    let report = fit(&mut m, &[1.0; 8], &[1.0], &cfg).unwrap();
    assert_eq!(report.epochs.len(), 2);
    assert_eq!(report.best_epoch, 1);
    assert_eq!(report.stop_reason, StopReason::Patience);
}

#[test]
fn best_weights_are_restored() {
    // Improves twice, then gets worse until patience runs out.
    let mut m = Scalar::new(0.0, vec![0.9, 0.5, 0.4, 0.45, 0.6, 0.7]);
    let cfg = quick(TrainConfig { patience: 3, ..TrainConfig::default() });
    let report = fit(&mut m, &[1.0; 8], &[1.0], &cfg).unwrap();
    assert_eq!(report.best_epoch, 3);
    assert_eq!(report.epochs.len(), 6);
    let min = report.epochs.iter().map(|e| e.val_nrmse).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_val_nrmse(), min);
    let seen = m.seen.borrow()[2];
    assert_eq!(m.value().to_bits(), seen.to_bits());
}

#[test]
fn sanity_loss_strictly_decreases() {
    let mut m = Scalar::new(0.0, Vec::new());
    let cfg = quick(TrainConfig { max_epochs: 5, learning_rate: 0.01, ..TrainConfig::default() });
    let report = fit(&mut m, &[0.7; 16], &[0.7], &cfg).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert_eq!(report.stop_reason, StopReason::MaxEpochs);
    let csv = report.to_csv();
    assert!(csv.starts_with("epoch,train_loss,val_nrmse\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn divergence_names_epoch_and_batch() {
    let mut m = Scalar::new(1.0, Vec::new());
    let cfg = quick(TrainConfig { learning_rate: 1e300, ..TrainConfig::default() });
    match fit(&mut m, &[0.0; 8], &[0.0], &cfg) {
        Err(Error::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn micro() -> (ModelConfig, Vec<Sample>, Vec<Sample>) {
    let (pv, nwp) = synth_generate(10, 8, 3000.0).unwrap();
    let data = consolidate(&pv, &nwp).unwrap();
    let spec = WindowSpec { input_steps: 16, horizon: 24, stride_hours: 6 };
    let mut all = make_samples(&data, &spec);
    let val = all.split_off(all.len() - 4);
    let cfg = ModelConfig { units: 5, input_steps: 16, seed: 17, ..ModelConfig::published(Family::S2sAttn, TargetMode::Pdf) };
    (cfg, all, val)
}

struct NoModelFeeds(usize);

impl TrainObserver for NoModelFeeds {
    fn on_batch(&mut self, _: usize, _: usize, _: f64, trace: &DecoderTrace) {
        assert!(!trace.consumed_model_output());
        assert_eq!(trace.feeds.len() % 24, 0);
        self.0 += 1;
    }
}

#[test]
fn training_is_deterministic_and_teacher_forced() {
    let (cfg, train, val) = micro();
    let tc = TrainConfig { batch_size: 8, max_epochs: 2, seed: 5, ..TrainConfig::default() };
    let run = |obs: &mut NoModelFeeds| {
        let mut m = build_model(&cfg).unwrap();
        let r = fit_with(&mut m, &train, &val, &tc, obs).unwrap();
        (encode(&m, &Metadata::new()).unwrap(), r)
    };
    let mut obs = NoModelFeeds(0);
    let (a, ra) = run(&mut obs);
    assert_eq!(obs.0, 2 * train.len().div_ceil(8));
    let (b, rb) = run(&mut NoModelFeeds(0));
    assert_eq!(a, b);
    assert_eq!(ra.epochs, rb.epochs);
}

#[test]
fn checkpoint_roundtrip_is_bitwise() {
    let (cfg, train, _) = micro();
    let model = build_model(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(count_parameters(&back), count_parameters(&model));
    for ((_, a), (_, b)) in model.params.iter().zip(back.params.iter()) {
        assert_eq!(a.name, b.name);
        assert!(a.tensor.values().iter().zip(b.tensor.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let fa = model.forecast_with(&train[..3], DecodeMode::SelfRecurrent).unwrap();
    let fb = back.forecast_with(&train[..3], DecodeMode::SelfRecurrent).unwrap();
    assert_eq!(fa, fb);
}

#[test]
fn checkpoint_metadata_survives() {
    let (cfg, _, _) = micro();
    let model = build_model(&cfg).unwrap();
    let mut meta = Metadata::new();
    meta.insert("p_max".into(), "3000.0".into());
    let (_, back) = decode(&encode(&model, &meta).unwrap()).unwrap();
    assert_eq!(back, meta);
}

#[test]
fn damaged_checkpoints_are_format_errors() {
    let (cfg, _, _) = micro();
    let bytes = encode(&build_model(&cfg).unwrap(), &Metadata::new()).unwrap();
    let format_err = |b: &[u8]| matches!(decode(b), Err(Error::Format(_)));

    let mut header = bytes.clone();
    header[30] ^= 0x20;
    assert!(format_err(&header));

    assert!(format_err(&bytes[..bytes.len() / 2]));
    assert!(format_err(&bytes[..bytes.len() - 1]));
    assert!(format_err(&bytes[..5]));

    let mut version = bytes.clone();
    version[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    match decode(&version) {
        Err(Error::Format(msg)) => assert!(msg.contains("version")),
        other => panic!("{:?}", other.map(|_| ())),
    }

    let mut payload = bytes.clone();
    let n = payload.len();
    payload[n - 40] ^= 1;
    assert!(format_err(&payload));
}
