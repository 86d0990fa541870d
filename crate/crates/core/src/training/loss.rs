use crate::dataset::BinnedDistribution;
use crate::error::{contract_err, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Default floor applied to forecast probabilities inside the logarithm.
pub const EPSILON_FLOOR: f64 = 1e-9;

/// `Σₜ Σᵢ −P(t,i) · ln(max(F(t,i), floor) / P(t,i))`, skipping `P = 0`.
pub fn kl_loss(f: &[BinnedDistribution], p: &[BinnedDistribution], floor: f64) -> Result<f64> {
    if f.len() != p.len() {
        return Err(contract_err(format!("{} forecast steps against {} targets", f.len(), p.len())));
    }
    if !(floor > 0.0) {
        return Err(contract_err("kl floor must be positive"));
    }
    let mut total = 0.0;
    for (a, b) in f.iter().zip(p) {
        if a.bins() != b.bins() {
            return Err(contract_err(format!("{} bins against {}", a.bins(), b.bins())));
        }
        for (&fi, &pi) in a.probs().iter().zip(b.probs()) {
            if pi > 0.0 {
                total -= pi * (fi.max(floor) / pi).ln();
            }
        }
    }
    Ok(total)
}

/// `(1/T) Σₜ (F(t) − E(P(t)))²`.
pub fn mse_loss(f: &[f64], p_e: &[f64]) -> Result<f64> {
    if f.len() != p_e.len() || f.is_empty() {
        return Err(contract_err(format!("{} forecast steps against {} targets", f.len(), p_e.len())));
    }
    Ok(f.iter().zip(p_e).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f.len() as f64)
}

/// KL divergence of a `[B, T, bins]` output against its targets, averaged
/// over the batch.
pub fn kl_graph(g: &mut Graph, output: Var, target: &Tensor, floor: f64) -> Result<Var> {
    let batch = g.shape(output)[0] as f64;
    let t = g.constant(target.clone());
    let total = g.kl_div(output, t, floor)?;
    g.scale(total, 1.0 / batch)
}

/// Squared error of a `[B, T, 1]` output, averaged over batch and steps.
pub fn mse_graph(g: &mut Graph, output: Var, target: &Tensor) -> Result<Var> {
    let s = g.shape(output);
    let n = (s[0] * s[1]) as f64;
    let t = g.constant(target.clone());
    let total = g.squared_error(output, t)?;
    g.scale(total, 1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(p: &[f64]) -> BinnedDistribution {
        BinnedDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = d(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_loss(&[p.clone()], &[p.clone()], EPSILON_FLOOR).unwrap(), 0.0);
        let v = kl_loss(&[d(&[0.25, 0.75])], &[d(&[0.5, 0.5])], EPSILON_FLOOR).unwrap();
        let hand = 0.5 * 2f64.ln() - 0.5 * 1.5f64.ln();
        assert!((v - hand).abs() < 1e-15);
        assert!((v - 0.1438).abs() < 5e-5);
        let clamp = kl_loss(&[d(&[1.0, 0.0])], &[d(&[0.0, 1.0])], EPSILON_FLOOR).unwrap();
        assert!((clamp - 20.72).abs() < 0.01 && clamp.is_finite());
        assert!(kl_loss(&[p.clone()], &[], EPSILON_FLOOR).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.3; 24], &[0.3; 24]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.5; 24], &[0.0; 24]).unwrap(), 0.25);
        let mut f = [0.4; 24];
        let mut p = [0.4; 24];
        (f[0], f[1], p[0], p[1]) = (1.0, 0.0, 0.0, 1.0);
        assert!((mse_loss(&f, &p).unwrap() - 2.0 / 24.0).abs() < 1e-15);
        assert!(mse_loss(&[0.1], &[0.1, 0.2]).is_err());
    }
}
