//! Stochastic gradient descent with Nesterov momentum.

use crate::error::{contract_err, Error, Result};
use crate::params::ParamStore;

/// Nesterov SGD in the velocity-lookahead form:
///
/// ```text
/// v ← μ·v − lr·g
/// θ ← θ + μ·v − lr·g
/// ```
#[derive(Clone, Debug)]
pub struct SgdNesterov {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdNesterov {
    pub fn new(learning_rate: f64, momentum: f64, params: &ParamStore) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        let velocity = params.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
        Ok(Self { learning_rate, momentum, velocity })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update from the gradients currently held by `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.velocity.len() {
            return Err(contract_err(format!(
                "optimizer tracks {} parameters, store has {}",
                self.velocity.len(),
                params.len()
            )));
        }
        let (lr, mu) = (self.learning_rate, self.momentum);
        for (p, v) in params.iter_mut().zip(&mut self.velocity) {
            let grad = p
                .tensor
                .grad
                .take()
                .ok_or_else(|| contract_err(format!("parameter {} has no gradient", p.name)))?;
            if grad.len() != v.len() {
                return Err(contract_err(format!("velocity length mismatch for {}", p.name)));
            }
            for ((theta, vel), g) in p.tensor.values_mut().iter_mut().zip(v.iter_mut()).zip(&grad) {
                *vel = mu * *vel - lr * g;
                *theta += mu * *vel - lr * g;
            }
            p.tensor.grad = Some(grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(theta: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::scalar(theta));
        s
    }

    fn set_grad(s: &mut ParamStore, g: f64) {
        s.iter_mut().next().unwrap().tensor.grad = Some(vec![g]);
    }

    fn theta(s: &ParamStore) -> f64 {
        s.iter().next().unwrap().1.tensor.item()
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut s = single(1.0);
        let mut opt = SgdNesterov::new(0.1, 0.0, &s).unwrap();
        set_grad(&mut s, 0.5);
        opt.step(&mut s).unwrap();
        assert!((theta(&s) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = single(0.3);
        let mut opt = SgdNesterov::new(0.1, 0.75, &s).unwrap();
        set_grad(&mut s, 0.0);
        opt.step(&mut s).unwrap();
        assert_eq!(theta(&s), 0.3);
    }

    #[test]
    fn two_steps_on_quadratic_decrease() {
        // Oracle: script the recurrence by hand for f(θ) = θ²/2, g = θ.
        let (lr, mu) = (0.1, 0.75);
        let (mut th, mut v) = (1.0f64, 0.0f64);
        let mut expected = vec![];
        for _ in 0..2 {
            let g = th;
            v = mu * v - lr * g;
            th += mu * v - lr * g;
            expected.push(th);
        }

        let mut s = single(1.0);
        let mut opt = SgdNesterov::new(lr, mu, &s).unwrap();
        let mut f_prev = 0.5;
        for want in expected {
            let g = theta(&s);
            set_grad(&mut s, g);
            opt.step(&mut s).unwrap();
            assert!((theta(&s) - want).abs() < 1e-15);
            let f = theta(&s).powi(2) / 2.0;
            assert!(f < f_prev);
            f_prev = f;
        }
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut s = single(1.0);
        let mut opt = SgdNesterov::new(0.1, 0.5, &s).unwrap();
        s.iter_mut().next().unwrap().tensor.grad = None;
        assert!(matches!(opt.step(&mut s), Err(Error::Contract(_))));
    }
}
