use std::fmt::Write as _;

use crate::dataset::Sample;
use crate::error::{contract_err, Result};
use crate::metrics::{crps, nme, nrmse_with, skill, NrmseForm};
use crate::models::{Family, Forecast, Model};

/// Anything that can forecast a set of samples.
pub trait Forecaster {
    fn name(&self) -> String;
    /// The persistence reference that skills are measured against.
    fn is_reference(&self) -> bool;
    fn forecast_all(&self, samples: &[Sample]) -> Result<Vec<Forecast>>;
}

impl Forecaster for Model {
    fn name(&self) -> String {
        self.config.name()
    }

    fn is_reference(&self) -> bool {
        self.config.family == Family::Persistence
    }

    fn forecast_all(&self, samples: &[Sample]) -> Result<Vec<Forecast>> {
        self.forecast_batch(samples)
    }
}

/// Scores of one model on one split, averaged over forecast windows.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub split: String,
    pub nrmse: f64,
    pub nme: f64,
    /// Only for distributional forecasts.
    pub crps: Option<f64>,
    /// Absent for the reference row.
    pub s_nrmse: Option<f64>,
    pub s_crps: Option<f64>,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

#[derive(Clone)]
struct Means {
    nrmse: f64,
    nme: f64,
    crps: Option<f64>,
}

fn score(forecasts: &[Forecast], samples: &[Sample], form: NrmseForm) -> Result<Means> {
    if forecasts.len() != samples.len() || samples.is_empty() {
        return Err(contract_err(format!("{} forecasts for {} samples", forecasts.len(), samples.len())));
    }
    let n = samples.len() as f64;
    let (mut e_rmse, mut e_me, mut e_crps) = (0.0, 0.0, Some(0.0));
    for (f, s) in forecasts.iter().zip(samples) {
        if !s.has_targets() {
            return Err(contract_err("cannot score a sample without observed targets"));
        }
        let fe = f.expected_values();
        e_rmse += nrmse_with(&fe, &s.target_e, 1.0, form)?;
        e_me += nme(&fe, &s.target_e, 1.0)?;
        e_crps = match (e_crps, f) {
            (Some(acc), Forecast::Pdf(d)) => Some(acc + crps(d, &s.target_pdf)?),
            _ => None,
        };
    }
    Ok(Means { nrmse: e_rmse / n, nme: e_me / n, crps: e_crps.map(|c| c / n) })
}

/// Scores every model on every named split; skills are relative to the
/// reference model's row on the same split.
pub fn evaluate(
    models: &[&dyn Forecaster],
    splits: &[(&str, &[Sample])],
    form: NrmseForm,
) -> Result<EvalReport> {
    let reference = models
        .iter()
        .find(|m| m.is_reference())
        .ok_or_else(|| contract_err("evaluation needs a persistence reference"))?;
    let mut rows = Vec::new();
    for &(split, samples) in splits {
        let base = score(&reference.forecast_all(samples)?, samples, form)?;
        for m in models {
            let s = if m.is_reference() { base.clone() } else { score(&m.forecast_all(samples)?, samples, form)? };
            let (s_nrmse, s_crps) = if m.is_reference() {
                (None, None)
            } else {
                let s_crps = match (s.crps, base.crps) {
                    (Some(c), Some(b)) => Some(skill(c, b)?),
                    _ => None,
                };
                (Some(skill(s.nrmse, base.nrmse)?), s_crps)
            };
            rows.push(EvalRow {
                model: m.name(),
                split: split.to_string(),
                nrmse: s.nrmse,
                nme: s.nme,
                crps: s.crps,
                s_nrmse,
                s_crps,
                n_samples: samples.len(),
            });
        }
    }
    Ok(EvalReport { rows })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

impl EvalReport {
    pub fn row(&self, model: &str, split: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.model == model && r.split == split)
    }

    /// Model names in first-seen order.
    pub fn models(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.model.as_str()) {
                out.push(&r.model);
            }
        }
        out
    }

    fn splits(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.split.as_str()) {
                out.push(&r.split);
            }
        }
        out
    }

    /// `model,split,nrmse,nme,crps,s_nrmse,s_crps,n_samples`. Missing CRPS
    /// reads `-`; skills of the reference row are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,split,nrmse,nme,crps,s_nrmse,s_crps,n_samples\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for r in &self.rows {
            let crps = r.crps.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
            let s_crps = match (r.s_nrmse, r.s_crps) {
                (Some(_), None) => "-".to_string(),
                (_, v) => opt(v),
            };
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{},{},{},{}",
                r.model,
                r.split,
                r.nrmse,
                r.nme,
                crps,
                opt(r.s_nrmse),
                s_crps,
                r.n_samples
            );
        }
        s
    }

    /// One row per model, one column pair per metric across splits.
    pub fn to_table(&self) -> String {
        let splits = self.splits();
        let metrics = ["nRMSE", "nME", "CRPS", "S_nRMSE", "S_CRPS"];
        let col = 8;
        let group = col * splits.len();
        let name_w = self.models().iter().map(|m| m.len()).max().unwrap_or(5).max(5) + 2;
        let mut s = format!("{:name_w$}", "");
        for m in metrics {
            let _ = write!(s, "{m:<group$}");
        }
        s = s.trim_end().to_string();
        s.push('\n');
        let _ = write!(s, "{:name_w$}", "Model");
        for _ in metrics {
            for sp in &splits {
                let _ = write!(s, "{sp:<col$}");
            }
        }
        s = s.trim_end().to_string();
        s.push('\n');
        for model in self.models() {
            let mut line = format!("{model:name_w$}");
            for m in metrics {
                for sp in &splits {
                    let r = self.row(model, sp);
                    let v = r.and_then(|r| match m {
                        "nRMSE" => Some(r.nrmse),
                        "nME" => Some(r.nme),
                        "CRPS" => r.crps,
                        "S_nRMSE" => r.s_nrmse,
                        _ => r.s_crps,
                    });
                    let _ = write!(line, "{:<col$}", cell(v));
                }
            }
            s.push_str(line.trim_end());
            s.push('\n');
        }
        s
    }
}
