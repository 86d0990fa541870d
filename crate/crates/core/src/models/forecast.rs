use crate::dataset::{expected_value, BinnedDistribution};
use crate::error::{contract_err, Result};

/// A day-ahead forecast, one entry per hour.
#[derive(Clone, Debug, PartialEq)]
pub enum Forecast {
    Pdf(Vec<BinnedDistribution>),
    /// Expected power as a fraction of rated power.
    Expected(Vec<f64>),
}

impl Forecast {
    pub fn steps(&self) -> usize {
        match self {
            Forecast::Pdf(d) => d.len(),
            Forecast::Expected(e) => e.len(),
        }
    }

    /// Expected value per step, in `[0, 1]`.
    pub fn expected_values(&self) -> Vec<f64> {
        match self {
            Forecast::Pdf(d) => d.iter().map(expected_value).collect(),
            Forecast::Expected(e) => e.clone(),
        }
    }

    pub fn distributions(&self) -> Option<&[BinnedDistribution]> {
        match self {
            Forecast::Pdf(d) => Some(d),
            Forecast::Expected(_) => None,
        }
    }
}

/// Tomorrow looks like today: `F(t) = P(t − 24)`.
pub fn persistence_forecast(history: &[BinnedDistribution]) -> Result<Forecast> {
    if history.len() != 24 {
        return Err(contract_err(format!(
            "persistence needs exactly 24 hourly distributions, got {}",
            history.len()
        )));
    }
    Ok(Forecast::Pdf(history.to_vec()))
}
