use proptest::prelude::*;
use pvcast::dataset::{consolidate, make_samples, synth_generate, BinnedDistribution, Sample, WindowSpec};
use pvcast::metrics::{crps, evaluate, nme, nrmse, skill, Forecaster, NrmseForm};
use pvcast::models::{build_model, Family, Forecast, ModelConfig, TargetMode};

/// (model, nRMSE val, nRMSE test, S_nRMSE val, S_nRMSE test) as published.
const TABLE: [(&str, f64, f64, f64, f64); 8] = [
    ("FFNN-E", 0.078, 0.083, 0.464, 0.376),
    ("FFNN-pdf", 0.072, 0.074, 0.501, 0.446),
    ("LSTM-E", 0.073, 0.080, 0.496, 0.395),
    ("LSTM-pdf", 0.080, 0.087, 0.450, 0.344),
    ("S2S-E", 0.089, 0.100, 0.388, 0.249),
    ("S2S-pdf", 0.068, 0.072, 0.529, 0.456),
    ("S2S-Attn-E", 0.119, 0.121, 0.184, 0.089),
    ("S2S-Attn-pdf", 0.067, 0.069, 0.536, 0.481),
];
const PERSISTENCE: (f64, f64) = (0.145, 0.133);

/// Every printed value is rounded to three decimals, so the printed skill
/// must be reachable from some errors inside the rounding intervals.
#[test]
fn published_skill_scores_are_consistent_with_rounded_errors() {
    const HALF: f64 = 0.0005;
    let check = |name: &str, err: f64, base: f64, printed: f64| {
        let lo = skill(err + HALF, base - HALF).unwrap();
        let hi = skill(err - HALF, base + HALF).unwrap();
        assert!(lo - HALF <= printed && printed <= hi + HALF, "{name}: {printed} outside [{lo:.4}, {hi:.4}]");
    };
    for (name, val, test, s_val, s_test) in TABLE {
        check(name, val, PERSISTENCE.0, s_val);
        check(name, test, PERSISTENCE.1, s_test);
    }
}

struct Oracle;

impl Forecaster for Oracle {
    fn name(&self) -> String {
        "Oracle-pdf".into()
    }
    fn is_reference(&self) -> bool {
        false
    }
    fn forecast_all(&self, samples: &[Sample]) -> pvcast::Result<Vec<Forecast>> {
        Ok(samples.iter().map(|s| Forecast::Pdf(s.target_pdf.clone())).collect())
    }
}

fn samples() -> Vec<Sample> {
    let (pv, nwp) = synth_generate(12, 9, 4000.0).unwrap();
    let data = consolidate(&pv, &nwp).unwrap();
    make_samples(&data, &WindowSpec { input_steps: 16, horizon: 24, stride_hours: 12 })
}

#[test]
fn perfect_model_scores_zero_and_full_skill() {
    let s = samples();
    let persistence = build_model(&ModelConfig::published(Family::Persistence, TargetMode::Pdf)).unwrap();
    let report = evaluate(&[&persistence, &Oracle], &[("val", &s), ("test", &s[..5])], NrmseForm::AsPrinted).unwrap();
    assert_eq!(report.rows.len(), 4);
    for split in ["val", "test"] {
        let r = report.row("Oracle-pdf", split).unwrap();
        assert_eq!((r.nrmse, r.nme, r.crps), (0.0, 0.0, Some(0.0)));
        assert_eq!((r.s_nrmse, r.s_crps), (Some(1.0), Some(1.0)));
        let p = report.row("Persistence", split).unwrap();
        assert_eq!((p.s_nrmse, p.s_crps), (None, None));
        assert!(p.nrmse > 0.0 && p.crps.unwrap() > 0.0);
    }
    let csv = report.to_csv();
    assert!(csv.starts_with("model,split,nrmse,nme,crps,s_nrmse,s_crps,n_samples\n"));
    let persistence_line = csv.lines().find(|l| l.starts_with("Persistence,val")).unwrap();
    assert!(persistence_line.ends_with(&format!(",,,{}", s.len())));
}

#[test]
fn report_skills_recompute_from_rows() {
    let s = samples();
    let persistence = build_model(&ModelConfig::published(Family::Persistence, TargetMode::Pdf)).unwrap();
    let cfg = |mode| ModelConfig { units: 5, input_steps: 16, seed: 4, ..ModelConfig::published(Family::S2s, mode) };
    let pdf = build_model(&cfg(TargetMode::Pdf)).unwrap();
    let e = build_model(&cfg(TargetMode::Expected)).unwrap();
    let report = evaluate(&[&persistence, &pdf, &e], &[("test", &s)], NrmseForm::AsPrinted).unwrap();
    let base = report.row("Persistence", "test").unwrap();
    for r in &report.rows[1..] {
        let expect = 1.0 - r.nrmse / base.nrmse;
        assert!((r.s_nrmse.unwrap() - expect).abs() < 1e-12);
    }
    let er = report.row("S2S-E", "test").unwrap();
    assert_eq!((er.crps, er.s_crps), (None, None));
    assert!(report.row("S2S-pdf", "test").unwrap().s_crps.is_some());
    let csv = report.to_csv();
    let e_line = csv.lines().find(|l| l.starts_with("S2S-E,")).unwrap();
    assert_eq!(e_line.split(',').nth(4), Some("-"));
    let table = report.to_table();
    assert_eq!(table.lines().count(), 2 + 3);
    assert!(table.contains("S_CRPS"));
}

#[test]
fn evaluation_requires_a_reference() {
    let s = samples();
    assert!(evaluate(&[&Oracle], &[("val", &s)], NrmseForm::AsPrinted).is_err());
}

fn distribution(bins: usize) -> impl Strategy<Value = BinnedDistribution> {
    prop::collection::vec(0.0f64..1.0, bins).prop_filter_map("all zero", |w| {
        let total: f64 = w.iter().sum();
        (total > 1e-6).then(|| BinnedDistribution::new(w.iter().map(|x| x / total).collect()).ok()).flatten()
    })
}

proptest! {
    #[test]
    fn scores_are_non_negative(
        f in prop::collection::vec(0.0f64..1.0, 24),
        p in prop::collection::vec(0.0f64..1.0, 24),
    ) {
        prop_assert!(nme(&f, &p, 1.0).unwrap() >= 0.0);
        prop_assert!(nrmse(&f, &p, 1.0).unwrap() >= 0.0);
        prop_assert_eq!(nrmse(&f, &f, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn crps_is_symmetric_and_zero_on_equal(a in distribution(10), b in distribution(10)) {
        let x = crps(&[a.clone()], &[b.clone()]).unwrap();
        prop_assert!(x >= 0.0);
        prop_assert_eq!(x, crps(&[b], &[a.clone()]).unwrap());
        prop_assert_eq!(crps(&[a.clone()], &[a]).unwrap(), 0.0);
    }

    /// Splitting every bin into two equal halves keeps the cdf at the old
    /// edges and interpolates halfway in between.
    #[test]
    fn crps_under_bin_refinement(a in distribution(8), b in distribution(8)) {
        let refine = |d: &BinnedDistribution| {
            BinnedDistribution::new(d.probs().iter().flat_map(|&p| [p / 2.0, p / 2.0]).collect()).unwrap()
        };
        let coarse = crps(&[a.clone()], &[b.clone()]).unwrap();
        let fine = crps(&[refine(&a)], &[refine(&b)]).unwrap();
        // Independent oracle: sum the squared cdf gaps at old edges and midpoints.
        let (ca, cb) = (a.cdf(), b.cdf());
        let mut sum = 0.0;
        let mut prev = 0.0;
        for i in 0..8 {
            let d = ca[i] - cb[i];
            let mid = (prev + d) / 2.0;
            sum += mid * mid + d * d;
            prev = d;
        }
        prop_assert!((fine - sum / 16.0).abs() < 1e-12);
        prop_assert!((coarse * 8.0 - ca.iter().zip(&cb).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).abs() < 1e-12);
    }
}
