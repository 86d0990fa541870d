use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use chrono::Utc;
use clap::{Parser, Subcommand};
use log::{info, warn};

use pvcast::dataset::manifest::parse_key_values;
use pvcast::dataset::series::{format_timestamp, parse_timestamp};
use pvcast::dataset::{
    consolidate, ingest_csv, prepare, sample_at, synth_generate, AlignedDataset, DatasetManifest, Sample, WindowSpec,
};
use pvcast::metrics::{evaluate, Forecaster};
use pvcast::models::{build_model, Family, Forecast, Model, TargetMode};
use pvcast::training::{fit, load_checkpoint_with, save_checkpoint_with, Metadata, TrainReport};

mod manifest;
mod plot;
mod settings;

use manifest::{read_parameter, RunManifest};
use settings::RunSettings;

const PV_FILE: &str = "pv.csv";
const NWP_FILE: &str = "nwp.csv";
const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Parser)]
#[command(name = "pvcast", version, about = "Probabilistic day-ahead PV power forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a seeded synthetic PV and NWP dataset.
    GenData {
        #[arg(long)]
        days: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rated power in watts.
        #[arg(long, default_value_t = 5000.0)]
        pmax: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant.
    Train {
        /// persistence, ffnn, lstm, s2s or s2s_attn.
        #[arg(long)]
        model: String,
        /// pdf or E.
        #[arg(long, default_value = "pdf")]
        mode: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every variant and compare them against persistence.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast the 24 hours after a timestamp with a trained checkpoint.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Hour-aligned UTC timestamp, e.g. 2016-03-01T00:00:00Z.
        #[arg(long)]
        at: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write a fan chart.
        #[arg(long)]
        svg: bool,
    },
}

/// A usage or configuration problem (exit code 2).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<pvcast::Error>() {
            return match e {
                pvcast::Error::Config(_)
                | pvcast::Error::Data(_)
                | pvcast::Error::Parse { .. }
                | pvcast::Error::Format(_)
                | pvcast::Error::Io(_) => 2,
                _ => 3,
            };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::GenData { days, seed, pmax, out } => gen_data(days, seed, pmax, &out),
        Cmd::Train { model, mode, data, config, out } => train(&model, &mode, &data, config.as_deref(), &out),
        Cmd::Benchmark { data, config, out } => benchmark(&data, config.as_deref(), &out),
        Cmd::Forecast { checkpoint, data, at, out, svg } => forecast(&checkpoint, &data, &at, &out, svg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn gen_data(days: u32, seed: u64, pmax: f64, out: &Path) -> anyhow::Result<()> {
    let started = Utc::now();
    let (pv, nwp) = synth_generate(days, seed, pmax)?;
    std::fs::create_dir_all(out)?;
    let mut m = RunManifest::start("gen-data", started);
    m.seeds.insert("data".into(), seed);
    m.param("days", days).param("pmax", pmax);
    let pv_path = out.join(PV_FILE);
    pv.write_csv(&pv_path)?;
    m.output(&pv_path);
    let nwp_path = out.join(NWP_FILE);
    nwp.write_csv(&nwp_path)?;
    m.output(&nwp_path);
    let path = m.write(out)?;
    info!("wrote {days} days of data to {} ({})", out.display(), path.display());
    Ok(())
}

/// Rated power from the settings, else from the data directory's manifest.
fn rated_power(settings: &RunSettings, data: &Path) -> anyhow::Result<f64> {
    if let Some(p) = settings.p_max {
        return Ok(p);
    }
    read_parameter(data, "pmax")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| usage(format!("no p_max in the config and no gen-data manifest in {}", data.display())))
}

fn load_data(data: &Path, p_max: f64) -> anyhow::Result<AlignedDataset> {
    let (pv, nwp) = ingest_csv(&data.join(PV_FILE), &data.join(NWP_FILE), p_max)
        .with_context(|| format!("reading data from {}", data.display()))?;
    if pv.clipped > 0 {
        warn!("clipped {} PV readings into [0, {p_max}] W", pv.clipped);
    }
    Ok(consolidate(&pv, &nwp)?)
}

fn dataset_metadata(manifest: &DatasetManifest, window: &WindowSpec) -> pvcast::Result<Metadata> {
    let mut meta = parse_key_values(&manifest.to_text())?;
    meta.insert("stride_hours".into(), window.stride_hours.to_string());
    Ok(meta)
}

fn parse_mode(mode: &str) -> anyhow::Result<TargetMode> {
    mode.parse().map_err(|e: pvcast::Error| usage(e.to_string()))
}

fn parse_family(family: &str) -> anyhow::Result<Family> {
    family.parse().map_err(|e: pvcast::Error| usage(e.to_string()))
}

struct Trained {
    model: Model,
    report: TrainReport,
}

fn train_one(
    family: Family,
    mode: TargetMode,
    settings: &RunSettings,
    train: &[Sample],
    val: &[Sample],
) -> anyhow::Result<Trained> {
    let mut model = build_model(&settings.model(family, mode))?;
    info!("training {} ({} parameters)", model.name(), model.params.scalar_count());
    let report = fit(&mut model, train, val, &settings.train).with_context(|| format!("training {}", model.name()))?;
    info!(
        "{}: best epoch {} of {}, val nRMSE {:.5}",
        model.name(),
        report.best_epoch,
        report.epochs.len(),
        report.best_val_nrmse()
    );
    Ok(Trained { model, report })
}

fn write_trained(t: &Trained, meta: &Metadata, dir: &Path, m: &mut RunManifest) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    save_checkpoint_with(&t.model, meta, &ckpt)?;
    let report = dir.join("train_report.csv");
    std::fs::write(&report, t.report.to_csv())?;
    m.output(&ckpt);
    m.output(&report);
    Ok(())
}

fn record_settings(m: &mut RunManifest, settings: &RunSettings, config: Option<&Path>) {
    if let Some(c) = config {
        m.config_paths.push(c.display().to_string());
    }
    m.seeds.insert("train".into(), settings.train.seed);
    m.seeds.insert("split".into(), settings.split_seed);
    m.seeds.insert("model".into(), settings.model_seed);
}

fn train(family: &str, mode: &str, data: &Path, config: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let started = Utc::now();
    let family = parse_family(family)?;
    let mode = parse_mode(mode)?;
    if family == Family::Persistence {
        return Err(usage("persistence has nothing to train"));
    }
    let settings = RunSettings::load(config)?;
    let p_max = rated_power(&settings, data)?;
    let mut dataset = load_data(data, p_max)?;
    let window = settings.window();
    let (split, dmanifest) = prepare(&mut dataset, &window, &settings.split())?;
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(usage(format!("split left {:?} samples; need training and validation data", dmanifest.counts)));
    }
    let trained = train_one(family, mode, &settings, &split.train, &split.validation)?;
    std::fs::create_dir_all(out)?;
    let mut m = RunManifest::start("train", started);
    record_settings(&mut m, &settings, config);
    m.param("model", trained.model.name()).param("data", data.display());
    let meta = dataset_metadata(&dmanifest, &window)?;
    write_trained(&trained, &meta, out, &mut m)?;
    let dpath = out.join("dataset.txt");
    std::fs::write(&dpath, dmanifest.to_text())?;
    m.output(&dpath);
    m.write(out)?;
    Ok(())
}

fn benchmark(data: &Path, config: Option<&Path>, out: &Path) -> anyhow::Result<()> {
    let started = Utc::now();
    let settings = RunSettings::load(config)?;
    let p_max = rated_power(&settings, data)?;
    let mut dataset = load_data(data, p_max)?;
    let window = settings.window();
    let (split, dmanifest) = prepare(&mut dataset, &window, &settings.split())?;
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(usage(format!("split left {:?} samples; every split needs data", dmanifest.counts)));
    }
    info!("samples per split {:?}, {} discarded", dmanifest.counts, dmanifest.discarded);
    let variants: Vec<(Family, TargetMode)> = [Family::Ffnn, Family::Lstm, Family::S2s, Family::S2sAttn]
        .into_iter()
        .flat_map(|f| [(f, TargetMode::Expected), (f, TargetMode::Pdf)])
        .collect();
    let trained: Vec<Trained> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|&(f, mode)| {
                let (settings, split) = (&settings, &split);
                scope.spawn(move || train_one(f, mode, settings, &split.train, &split.validation))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("a training thread panicked"))?)
            .collect::<anyhow::Result<Vec<_>>>()
    })?;

    std::fs::create_dir_all(out)?;
    let mut m = RunManifest::start("benchmark", started);
    record_settings(&mut m, &settings, config);
    m.param("data", data.display());
    let meta = dataset_metadata(&dmanifest, &window)?;
    for t in &trained {
        write_trained(t, &meta, &out.join(t.model.name()), &mut m)?;
    }

    let persistence = build_model(&settings.model(Family::Persistence, TargetMode::Pdf))?;
    let mut models: Vec<&dyn Forecaster> = vec![&persistence];
    models.extend(trained.iter().map(|t| &t.model as &dyn Forecaster));
    let report = evaluate(&models, &[("val", &split.validation), ("test", &split.test)], settings.nrmse_form)?;
    let table = out.join("report.txt");
    std::fs::write(&table, report.to_table())?;
    let csv = out.join("report.csv");
    std::fs::write(&csv, report.to_csv())?;
    m.output(&table);
    m.output(&csv);
    println!("{}", report.to_table());

    let sample = &split.test[0];
    let plots = out.join("plots");
    std::fs::create_dir_all(&plots)?;
    for model in &models {
        let f = model.forecast_all(std::slice::from_ref(sample))?.remove(0);
        let title = format!("{} from {}", model.name(), format_timestamp(sample.anchor));
        let path = plots.join(format!("{}.svg", model.name()));
        std::fs::write(&path, plot::fan_chart(&title, &f, Some(&sample.target_e)))?;
        m.output(&path);
    }
    m.write(out)?;
    Ok(())
}

fn forecast(checkpoint: &Path, data: &Path, at: &str, out: &Path, svg: bool) -> anyhow::Result<()> {
    let started = Utc::now();
    let anchor = parse_timestamp(at).ok_or_else(|| usage(format!("cannot parse timestamp `{at}`")))?;
    let (model, meta) = load_checkpoint_with(checkpoint)?;
    if !model.is_trainable() {
        bail!(usage("checkpoint holds no trained network"));
    }
    let meta_text: String = meta.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let dmanifest = DatasetManifest::parse(&meta_text).context("checkpoint lacks dataset metadata")?;
    let mut dataset = load_data(data, dmanifest.p_max)?;
    dataset.norm = dmanifest.norm.clone();
    let window =
        WindowSpec { input_steps: model.config.input_steps, horizon: model.config.output_steps, stride_hours: 24 };
    let sample = sample_at(&dataset, anchor, &window)?;
    let f = model.forecast(&sample)?;

    std::fs::create_dir_all(out)?;
    let mut m = RunManifest::start("forecast", started);
    m.param("checkpoint", checkpoint.display()).param("at", format_timestamp(anchor)).param("model", model.name());
    let csv = out.join("forecast.csv");
    std::fs::write(&csv, forecast_csv(&f))?;
    m.output(&csv);
    if svg {
        let path = out.join("forecast.svg");
        let observed = sample.has_targets().then_some(sample.target_e.as_slice());
        let title = format!("{} from {}", model.name(), format_timestamp(anchor));
        std::fs::write(&path, plot::fan_chart(&title, &f, observed))?;
        m.output(&path);
    }
    m.write(out)?;
    Ok(())
}

/// `hour,expected[,bin_0..]`, one row per forecast hour.
fn forecast_csv(f: &Forecast) -> String {
    let expected = f.expected_values();
    let mut s = String::from("hour,expected");
    if let Some(d) = f.distributions() {
        for i in 0..d[0].bins() {
            s.push_str(&format!(",bin_{i}"));
        }
    }
    s.push('\n');
    for (h, e) in expected.iter().enumerate() {
        s.push_str(&format!("{},{e:?}", h + 1));
        if let Some(d) = f.distributions() {
            for p in d[h].probs() {
                s.push_str(&format!(",{p:?}"));
            }
        }
        s.push('\n');
    }
    s
}
