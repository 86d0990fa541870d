use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pvcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pvcast")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn gen(dir: &Path, days: &str) -> Output {
    pvcast(&["gen-data", "--days", days, "--seed", "7", "--out", dir.to_str().unwrap()])
}

const MICRO: &str = "units = 4\ninput_steps = 32\nstride_hours = 12\nblock_len = 4\n\
                     batch_size = 16\nmax_epochs = 2\npatience = 2\nseed = 1\n";

#[test]
fn gen_data_is_deterministic_with_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&gen(&a, "60")), 0);
    assert_eq!(code(&gen(&b, "60")), 0);
    for f in ["pv.csv", "nwp.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let rows = |f: &str| fs::read_to_string(a.join(f)).unwrap().lines().count() - 1;
    assert_eq!(rows("pv.csv"), 60 * 1440);
    assert_eq!(rows("nwp.csv"), 60 * 24);
    let manifest = fs::read_to_string(a.join("run.toml")).unwrap();
    assert!(manifest.contains("command = \"gen-data\""));
}

#[test]
fn too_few_days_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = gen(dir.path(), "3");
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least"));
}

#[test]
fn train_forecast_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&gen(&data, "20")), 0);
    let cfg = dir.path().join("micro.cfg");
    fs::write(&cfg, MICRO).unwrap();
    let (d, c) = (data.to_str().unwrap(), cfg.to_str().unwrap());

    let persistence = dir.path().join("p");
    let o = pvcast(&["train", "--model", "persistence", "--data", d, "--config", c, "--out", persistence.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = pvcast(&["train", "--model", "gru", "--data", d, "--config", c, "--out", persistence.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let mut val_scores = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = pvcast(&["train", "--model", "s2s_attn", "--mode", "pdf", "--data", d, "--config", c, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("model.ckpt").exists() && out.join("run.toml").exists());
        let report = fs::read_to_string(out.join("train_report.csv")).unwrap();
        assert!(report.lines().count() >= 2);
        val_scores.push(report);
    }
    assert_eq!(val_scores[0], val_scores[1]);

    let e_out = dir.path().join("e");
    let o = pvcast(&["train", "--model", "s2s", "--mode", "E", "--data", d, "--config", c, "--out", e_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let at = "2016-01-10T00:00:00Z";
    let f_out = dir.path().join("f");
    let ckpt = dir.path().join("r1/model.ckpt");
    let o = pvcast(&["forecast", "--checkpoint", ckpt.to_str().unwrap(), "--data", d, "--at", at, "--out", f_out.to_str().unwrap(), "--svg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(f_out.join("forecast.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        assert_eq!(r.len(), 52);
        assert!((r[2..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(fs::read_to_string(f_out.join("forecast.svg")).unwrap().starts_with("<svg"));

    let fe_out = dir.path().join("fe");
    let ckpt = e_out.join("model.ckpt");
    let o = pvcast(&["forecast", "--checkpoint", ckpt.to_str().unwrap(), "--data", d, "--at", at, "--out", fe_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(fe_out.join("forecast.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
    assert!(csv.lines().all(|l| l.split(',').count() == 2));

    // Eight hours of data cannot fill a 32-step window.
    let o = pvcast(&["forecast", "--checkpoint", ckpt.to_str().unwrap(), "--data", d, "--at", "2016-01-01T08:00:00Z", "--out", fe_out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn benchmark_reports_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&gen(&data, "24")), 0);
    let cfg = dir.path().join("micro.cfg");
    fs::write(&cfg, MICRO.replace("max_epochs = 2", "max_epochs = 1")).unwrap();
    let out = dir.path().join("bench");
    let o = pvcast(&["benchmark", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 18);
    for r in &rows {
        let (model, crps, s_nrmse, s_crps) = (r[0], r[4], r[5], r[6]);
        if model == "Persistence" {
            assert_eq!((s_nrmse, s_crps), ("", ""));
        } else if model.ends_with("-pdf") {
            assert!(crps.parse::<f64>().is_ok() && s_crps.parse::<f64>().is_ok());
        } else {
            assert!(model.ends_with("-E"));
            assert_eq!((crps, s_crps), ("-", "-"));
        }
    }
    assert_eq!(fs::read_dir(out.join("plots")).unwrap().count(), 9);
    assert!(fs::read_to_string(out.join("report.txt")).unwrap().contains("S2S-Attn-pdf"));
}
