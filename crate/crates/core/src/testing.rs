//! Finite-difference oracle shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between the tape gradient and a central
/// difference, over every scalar in `store`.
pub fn max_param_grad_error(
    store: &mut ParamStore,
    loss: impl Fn(&mut Graph) -> Result<Var>,
) -> f64 {
    let analytic: Vec<Vec<f64>> = {
        let mut g = Graph::new(store);
        let l = loss(&mut g).unwrap();
        g.backward(l).unwrap();
        let mut out: Vec<Vec<f64>> =
            store.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
        for (id, grad) in g.param_grads() {
            out[id.index()].copy_from_slice(grad);
        }
        out
    };
    let eval = |store: &ParamStore| {
        let mut g = Graph::new(store);
        let l = loss(&mut g).unwrap();
        g.value(l).item()
    };
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst = 0.0f64;
    for id in ids {
        for j in 0..store.get(id).len() {
            let orig = store.get(id).values()[j];
            store.get_mut(id).values_mut()[j] = orig + FD_STEP;
            let up = eval(store);
            store.get_mut(id).values_mut()[j] = orig - FD_STEP;
            let down = eval(store);
            store.get_mut(id).values_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[id.index()][j], numeric));
        }
    }
    worst
}
