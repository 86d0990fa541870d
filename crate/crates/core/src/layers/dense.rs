use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Sigmoid,
    Tanh,
    /// Softmax over the output features; used by probabilistic heads.
    Softmax,
}

/// `activation(x · W + b)`, broadcast over leading axes of `x`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weights: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    input_width: usize,
    output_width: usize,
}

impl DenseLayer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        input_width: usize,
        output_width: usize,
        activation: Activation,
    ) -> Self {
        let w = init.glorot([input_width, output_width], input_width, output_width);
        let weights = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros([output_width]));
        Self { weights, bias, activation, input_width, output_width }
    }

    /// Wraps explicit weights `[in, out]` and bias `[out]`.
    pub fn from_tensors(
        store: &mut ParamStore,
        name: &str,
        weights: Tensor,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(shape_err(format!(
                "dense weights {:?} with bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        let (input_width, output_width) = (weights.shape()[0], weights.shape()[1]);
        let weights = store.add(format!("{name}.weight"), weights);
        let bias = store.add(format!("{name}.bias"), bias);
        Ok(Self { weights, bias, activation, input_width, output_width })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn param_count(&self) -> usize {
        self.input_width * self.output_width + self.output_width
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weights);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w)?;
        let z = g.add_bias(xw, b)?;
        match self.activation {
            Activation::None => Ok(z),
            Activation::Sigmoid => g.sigmoid(z),
            Activation::Tanh => g.tanh(z),
            Activation::Softmax => g.softmax(z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{max_param_grad_error, random_tensor};

    #[test]
    fn identity_layer() {
        let mut store = ParamStore::new();
        let layer = DenseLayer::from_tensors(
            &mut store,
            "id",
            Tensor::identity(3),
            Tensor::zeros([3]),
            Activation::None,
        )
        .unwrap();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::new([1, 3], vec![0.5, -1.0, 2.0]).unwrap());
        let y = layer.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).values(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn hand_arithmetic() {
        let mut store = ParamStore::new();
        let layer = DenseLayer::from_tensors(
            &mut store,
            "d",
            Tensor::new([2, 1], vec![1.0, 1.0]).unwrap(),
            Tensor::new([1], vec![0.5]).unwrap(),
            Activation::None,
        )
        .unwrap();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::new([1, 2], vec![1.0, 2.0]).unwrap());
        let y = layer.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).values(), &[3.5]);
        assert_eq!(layer.param_count(), 3);
    }

    #[test]
    fn param_count_two_to_three() {
        let mut store = ParamStore::new();
        let layer =
            DenseLayer::new(&mut store, &mut Initializer::new(0), "d", 2, 3, Activation::None);
        assert_eq!(layer.param_count(), 9);
        assert_eq!(store.scalar_count(), 9);
    }

    #[test]
    fn shape_mismatch() {
        let mut store = ParamStore::new();
        let layer =
            DenseLayer::new(&mut store, &mut Initializer::new(0), "d", 4, 3, Activation::Tanh);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros([2, 5]));
        assert!(matches!(layer.forward(&mut g, x), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut store = ParamStore::new();
        let layer =
            DenseLayer::new(&mut store, &mut Initializer::new(11), "d", 4, 3, Activation::Tanh);
        let x_id = store.add("x", random_tensor(&[5, 4], 12));
        let err = max_param_grad_error(&mut store, |g| {
            let x = g.param(x_id);
            let y = layer.forward(g, x)?;
            let sq = g.mul(y, y)?;
            g.sum(sq)
        });
        assert!(err < 1e-6, "max relative error {err:e}");
    }
}
