use crate::error::{contract_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Hidden and cell state of one LSTM layer, each `[batch, units]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// A standard LSTM layer with input, forget and output gates.
///
/// Gate pre-activations are packed along the last axis in the order
/// input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmLayer {
    pub input_weights: ParamId,
    pub recurrent_weights: ParamId,
    pub bias: ParamId,
    input_width: usize,
    units: usize,
}

impl LstmLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        input_width: usize,
        units: usize,
    ) -> Self {
        let gates = 4 * units;
        let wx = init.glorot([input_width, gates], input_width, gates);
        let wh = init.glorot([units, gates], units, gates);
        let mut b = Tensor::zeros([gates]);
        b.values_mut()[units..2 * units].fill(1.0);
        Self {
            input_weights: store.add(format!("{name}.w_input"), wx),
            recurrent_weights: store.add(format!("{name}.w_recurrent"), wh),
            bias: store.add(format!("{name}.bias"), b),
            input_width,
            units,
        }
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn param_count(&self) -> usize {
        4 * (self.input_width * self.units + self.units * self.units + self.units)
    }

    pub fn zero_state(&self, g: &mut Graph, batch: usize) -> LstmState {
        let h = g.constant(Tensor::zeros([batch, self.units]));
        let c = g.constant(Tensor::zeros([batch, self.units]));
        LstmState { h, c }
    }

    /// One time step: `x` is `[batch, input_width]`.
    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> Result<LstmState> {
        let xs = g.shape(x).to_vec();
        if xs.len() != 2 || xs[1] != self.input_width {
            return Err(contract_err(format!(
                "lstm input {xs:?} does not match input width {}",
                self.input_width
            )));
        }
        let batch = xs[0];
        for (name, v) in [("hidden", state.h), ("cell", state.c)] {
            if g.shape(v) != [batch, self.units] {
                return Err(contract_err(format!(
                    "{name} state {:?} does not match [{batch}, {}]",
                    g.shape(v),
                    self.units
                )));
            }
        }
        let u = self.units;
        let wx = g.param(self.input_weights);
        let wh = g.param(self.recurrent_weights);
        let b = g.param(self.bias);
        let zx = g.matmul(x, wx)?;
        let zh = g.matmul(state.h, wh)?;
        let z = g.add(zx, zh)?;
        let z = g.add_bias(z, b)?;
        let zi = g.slice_last(z, 0, u)?;
        let zf = g.slice_last(z, u, u)?;
        let zg = g.slice_last(z, 2 * u, u)?;
        let zo = g.slice_last(z, 3 * u, u)?;
        let i = g.sigmoid(zi)?;
        let f = g.sigmoid(zf)?;
        let cand = g.tanh(zg)?;
        let o = g.sigmoid(zo)?;
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{max_param_grad_error, random_tensor};

    fn layer_with(store: &mut ParamStore, bias: Vec<f64>) -> LstmLayer {
        let layer = LstmLayer::new(store, &mut Initializer::new(0), "l", 1, 1);
        store.get_mut(layer.input_weights).values_mut().fill(0.0);
        store.get_mut(layer.recurrent_weights).values_mut().fill(0.0);
        store.get_mut(layer.bias).values_mut().copy_from_slice(&bias);
        layer
    }

    #[test]
    fn zero_fixed_point() {
        let mut store = ParamStore::new();
        let layer = layer_with(&mut store, vec![0.0; 4]);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::new([1, 1], vec![0.7]).unwrap());
        let s0 = layer.zero_state(&mut g, 1);
        let s1 = layer.step(&mut g, x, s0).unwrap();
        assert_eq!(g.value(s1.h).values(), &[0.0]);
        assert_eq!(g.value(s1.c).values(), &[0.0]);
    }

    #[test]
    fn open_forget_gate_retains_memory() {
        let mut store = ParamStore::new();
        // input, forget, candidate, output
        let layer = layer_with(&mut store, vec![-10.0, 10.0, -10.0, -10.0]);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::new([1, 1], vec![0.0]).unwrap());
        let h = g.constant(Tensor::zeros([1, 1]));
        let c = g.constant(Tensor::new([1, 1], vec![1.0]).unwrap());
        let s1 = layer.step(&mut g, x, LstmState { h, c }).unwrap();
        // Direct evaluation of the update equations.
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let expected = sig(10.0) * 1.0 + sig(-10.0) * (-10f64).tanh();
        let got = g.value(s1.c).item();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 1.0).abs() < 1e-3);
    }

    #[test]
    fn state_width_mismatch_is_contract_error() {
        let mut store = ParamStore::new();
        let layer = LstmLayer::new(&mut store, &mut Initializer::new(0), "l", 2, 3);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros([1, 2]));
        let h = g.constant(Tensor::zeros([1, 4]));
        let c = g.constant(Tensor::zeros([1, 3]));
        assert!(matches!(
            layer.step(&mut g, x, LstmState { h, c }),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn param_count_formula() {
        let mut store = ParamStore::new();
        let layer = LstmLayer::new(&mut store, &mut Initializer::new(0), "l", 6, 184);
        assert_eq!(layer.param_count(), store.scalar_count());
        assert_eq!(layer.param_count(), 4 * (6 * 184 + 184 * 184 + 184));
    }

    #[test]
    fn single_step_gradient() {
        let mut store = ParamStore::new();
        let layer = LstmLayer::new(&mut store, &mut Initializer::new(5), "l", 3, 4);
        let x = store.add("x", random_tensor(&[2, 3], 6));
        let h0 = store.add("h0", random_tensor(&[2, 4], 7));
        let c0 = store.add("c0", random_tensor(&[2, 4], 8));
        let err = max_param_grad_error(&mut store, |g| {
            let s = LstmState { h: g.param(h0), c: g.param(c0) };
            let xv = g.param(x);
            let s1 = layer.step(g, xv, s)?;
            let both = g.concat(&[s1.h, s1.c], 1)?;
            let sq = g.mul(both, both)?;
            g.sum(sq)
        });
        assert!(err < 1e-5, "max relative error {err:e}");
    }
}
