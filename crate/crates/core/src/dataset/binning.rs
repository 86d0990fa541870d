//! Histogram targets over `[0, P_max]`.

use crate::error::{contract_err, Result};

pub const DEFAULT_BINS: usize = 50;

/// Probabilities over equal-width bins spanning `[0, P_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedDistribution {
    probs: Vec<f64>,
}

impl BinnedDistribution {
    /// Accepts probabilities that are non-negative and sum to one within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(contract_err("distribution needs at least one bin"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(contract_err("distribution has a negative or non-finite entry"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(contract_err(format!("distribution sums to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(bins: usize, bin: usize) -> Self {
        let mut probs = vec![0.0; bins];
        probs[bin] = 1.0;
        Self { probs }
    }

    pub fn uniform(bins: usize) -> Self {
        Self { probs: vec![1.0 / bins as f64; bins] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn bins(&self) -> usize {
        self.probs.len()
    }

    /// Running sums: `cdf[i] = Σ_{j ≤ i} p[j]`.
    pub fn cdf(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Quantile in normalized power units, interpolating linearly inside the
    /// bin where the cdf crosses `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let width = 1.0 / self.bins() as f64;
        let mut below = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 && below + p >= q {
                let frac = ((q - below) / p).clamp(0.0, 1.0);
                return (i as f64 + frac) * width;
            }
            below += p;
        }
        1.0
    }
}

/// Histogram of power readings over `bins` uniform bins on `[0, p_max]`.
///
/// Bin `k` covers `[k·w, (k+1)·w)` with `w = p_max / bins`; the last bin is
/// closed above so that `p_max` itself lands in it. Values are clamped to
/// `[0, p_max]` first.
pub fn bin_distribution(values: &[f64], p_max: f64, bins: usize) -> Result<BinnedDistribution> {
    if values.is_empty() {
        return Err(contract_err("cannot bin an empty set of readings"));
    }
    if !(p_max > 0.0) || bins == 0 {
        return Err(contract_err(format!("invalid binning p_max={p_max}, bins={bins}")));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let x = v.clamp(0.0, p_max) / p_max;
        let k = ((x * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    Ok(BinnedDistribution { probs: counts.into_iter().map(|c| c as f64 / n).collect() })
}

/// Bin-center expectation in normalized units: `Σ p[i]·(i + ½)/bins`.
pub fn expected_value(d: &BinnedDistribution) -> f64 {
    let bins = d.bins() as f64;
    d.probs.iter().enumerate().map(|(i, p)| p * (i as f64 + 0.5) / bins).sum()
}
