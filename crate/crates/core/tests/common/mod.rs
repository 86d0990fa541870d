//! Shared helpers for integration tests.

#![allow(dead_code)]

use pvcast::graph::{Graph, Var};
use pvcast::params::ParamStore;
use pvcast::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so that gradients that are
/// zero up to rounding do not blow up the ratio.
pub const REL_FLOOR: f64 = 1e-6;

pub fn uniform_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Worst relative disagreement between the tape's gradients and central
/// differences of `loss`, over every scalar of every parameter in `store`.
pub fn worst_gradient_error(store: &mut ParamStore, loss: impl Fn(&mut Graph) -> pvcast::Result<Var>) -> f64 {
    let mut analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
    {
        let mut g = Graph::new(store);
        let l = loss(&mut g).unwrap();
        g.backward(l).unwrap();
        for (id, grad) in g.param_grads() {
            analytic[id.index()].copy_from_slice(grad);
        }
    }
    let value = |store: &ParamStore| {
        let mut g = Graph::new(store);
        let l = loss(&mut g).unwrap();
        g.value(l).item()
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst = 0.0f64;
    for id in ids {
        for j in 0..store.get(id).len() {
            let x = store.get(id).values()[j];
            store.get_mut(id).values_mut()[j] = x + STEP;
            let up = value(store);
            store.get_mut(id).values_mut()[j] = x - STEP;
            let down = value(store);
            store.get_mut(id).values_mut()[j] = x;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[id.index()][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}
