//! Named trainable parameters and their seeded initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of trainable tensors. Insertion order is the
/// serialization order and the optimizer's velocity order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub const fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Param { name: name.into(), tensor: tensor.with_grad() });
        id
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            if let Some(g) = p.tensor.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) -> Result<()> {
        let t = &mut self.params[id.0].tensor;
        let buf = t.grad.get_or_insert_with(|| vec![0.0; grad.len()]);
        if buf.len() != grad.len() {
            return Err(contract_err(format!(
                "gradient length {} does not match parameter {}",
                grad.len(),
                buf.len()
            )));
        }
        for (b, g) in buf.iter_mut().zip(grad) {
            *b += g;
        }
        Ok(())
    }

    /// Copies of all parameter values, for best-epoch restoration.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params.iter().map(|p| p.tensor.values().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(contract_err("snapshot does not match parameter set"));
        }
        for (p, values) in self.params.iter_mut().zip(snapshot) {
            if values.len() != p.tensor.len() {
                return Err(contract_err(format!("snapshot length mismatch for {}", p.name)));
            }
            p.tensor.values_mut().copy_from_slice(values);
        }
        Ok(())
    }

    /// Sum of squared gradient entries.
    pub fn grad_norm_sq(&self) -> f64 {
        self.params
            .iter()
            .filter_map(|p| p.tensor.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum()
    }
}

/// Seeded weight initializer.
///
/// Weights are drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn glorot(&mut self, shape: [usize; 2], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape[0] * shape[1];
        let values = (0..n).map(|_| self.rng.random_range(-limit..limit)).collect();
        Tensor::new(shape, values).expect("shape matches value count")
    }

    pub fn uniform(&mut self, shape: &[usize], limit: f64) -> Tensor {
        let n = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-limit..limit)).collect();
        Tensor::new(shape.to_vec(), values).expect("shape matches value count")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_restore_roundtrip() {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(3);
        let id = store.add("w", init.glorot([3, 2], 3, 2));
        let snap = store.snapshot();
        store.get_mut(id).values_mut()[0] = 42.0;
        store.restore(&snap).unwrap();
        assert_eq!(store.get(id).values(), &snap[0][..]);
    }

    #[test]
    fn glorot_respects_limit_and_seed() {
        let a = Initializer::new(9).glorot([10, 10], 10, 10);
        let b = Initializer::new(9).glorot([10, 10], 10, 10);
        assert_eq!(a, b);
        let limit = (6.0f64 / 20.0).sqrt();
        assert!(a.values().iter().all(|v| v.abs() < limit));
    }
}
