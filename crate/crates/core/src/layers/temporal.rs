use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::layers::dense::{Activation, DenseLayer};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Collapses a sequence to a fixed number of output steps with a linear map
/// across time, then projects each step's features.
#[derive(Clone, Debug)]
pub struct TemporalTransform {
    pub time_weights: ParamId,
    pub time_bias: ParamId,
    pub feature: DenseLayer,
    in_steps: usize,
    out_steps: usize,
}

impl TemporalTransform {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        in_steps: usize,
        out_steps: usize,
        features: usize,
        out_features: usize,
        activation: Activation,
    ) -> Self {
        let w = init.glorot([in_steps, out_steps], in_steps, out_steps);
        let time_weights = store.add(format!("{name}.time_weight"), w);
        let time_bias = store.add(format!("{name}.time_bias"), Tensor::zeros([out_steps]));
        let feature =
            DenseLayer::new(store, init, &format!("{name}.feature"), features, out_features, activation);
        Self { time_weights, time_bias, feature, in_steps, out_steps }
    }

    pub fn from_parts(
        store: &mut ParamStore,
        name: &str,
        time_weights: Tensor,
        feature: DenseLayer,
    ) -> Result<Self> {
        if time_weights.rank() != 2 {
            return Err(shape_err("time weights must be [in_steps, out_steps]"));
        }
        let (in_steps, out_steps) = (time_weights.shape()[0], time_weights.shape()[1]);
        let time_weights = store.add(format!("{name}.time_weight"), time_weights);
        let time_bias = store.add(format!("{name}.time_bias"), Tensor::zeros([out_steps]));
        Ok(Self { time_weights, time_bias, feature, in_steps, out_steps })
    }

    pub fn out_steps(&self) -> usize {
        self.out_steps
    }

    pub fn param_count(&self) -> usize {
        self.in_steps * self.out_steps + self.out_steps + self.feature.param_count()
    }

    /// `[in_steps, F]` → `[out_steps, F']`, or batched `[B, in_steps, F]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x);
        let steps = s[s.len().saturating_sub(2)];
        if s.len() < 2 || steps != self.in_steps {
            return Err(shape_err(format!(
                "temporal transform expects {} input steps, got shape {s:?}",
                self.in_steps
            )));
        }
        let w = g.param(self.time_weights);
        let b = g.param(self.time_bias);
        let mixed = g.time_project(x, w, b)?;
        self.feature.forward(g, mixed)
    }
}
