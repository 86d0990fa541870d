//! Normalized errors, CRPS, skill against persistence, and comparison
//! reports.
//!
//! All scores take expected values normalized by rated power, so `p_max`
//! is `1.0` for model outputs; other scales are accepted for raw watts.

mod report;

pub use report::{evaluate, EvalReport, EvalRow, Forecaster};

use crate::dataset::BinnedDistribution;
use crate::error::{contract_err, Result};

/// Which normalization [`nrmse`] uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NrmseForm {
    /// `√(Σ (F − P)²) / (T · P_max)`, with `1/T` outside the root.
    #[default]
    AsPrinted,
    /// `√(Σ (F − P)² / T) / P_max`.
    Conventional,
}

fn check_pair(f: &[f64], p: &[f64], p_max: f64) -> Result<()> {
    if !(p_max > 0.0) {
        return Err(contract_err(format!("rated power must be positive, got {p_max}")));
    }
    if f.len() != p.len() || f.is_empty() {
        return Err(contract_err(format!("forecast has {} steps, truth has {}", f.len(), p.len())));
    }
    Ok(())
}

/// Normalized mean absolute error: `Σ |F − P| / (T · P_max)`.
pub fn nme(f: &[f64], p: &[f64], p_max: f64) -> Result<f64> {
    check_pair(f, p, p_max)?;
    let total: f64 = f.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / (f.len() as f64 * p_max))
}

/// Normalized root squared error in the default form.
pub fn nrmse(f: &[f64], p: &[f64], p_max: f64) -> Result<f64> {
    nrmse_with(f, p, p_max, NrmseForm::AsPrinted)
}

pub fn nrmse_with(f: &[f64], p: &[f64], p_max: f64, form: NrmseForm) -> Result<f64> {
    check_pair(f, p, p_max)?;
    let sq: f64 = f.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let t = f.len() as f64;
    Ok(match form {
        NrmseForm::AsPrinted => sq.sqrt() / (t * p_max),
        NrmseForm::Conventional => (sq / t).sqrt() / p_max,
    })
}

/// Squared distance between cumulative distributions, averaged over bins
/// and steps.
pub fn crps(f: &[BinnedDistribution], p: &[BinnedDistribution]) -> Result<f64> {
    if f.len() != p.len() || f.is_empty() {
        return Err(contract_err(format!("forecast has {} steps, truth has {}", f.len(), p.len())));
    }
    let bins = f[0].bins();
    let mut total = 0.0;
    for (a, b) in f.iter().zip(p) {
        if a.bins() != bins || b.bins() != bins {
            return Err(contract_err(format!("bin counts differ: {} against {}", a.bins(), b.bins())));
        }
        total += a.cdf().iter().zip(b.cdf()).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    Ok(total / (bins * f.len()) as f64)
}

/// `1 − model / persistence`.
pub fn skill(model_err: f64, persistence_err: f64) -> Result<f64> {
    if !(persistence_err > 0.0) {
        return Err(contract_err(format!("reference error must be positive, got {persistence_err}")));
    }
    Ok(1.0 - model_err / persistence_err)
}
