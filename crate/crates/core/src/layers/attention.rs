//! Scaled dot-product attention.
//!
//! ```text
//! score(Q, K) = (Q·W_Q)(K·W_K)ᵀ / √d_K
//! A(Q, K, V)  = softmax(score(Q, K)) · (V·W_V)
//! ```
//!
//! `d_K` is the width of the projected keys.

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::layers::dense::{Activation, DenseLayer};
use crate::params::{Initializer, ParamStore};

/// A linear projection into the attention width, or no projection at all
/// when the input already has that width.
#[derive(Clone, Debug)]
pub enum Projection {
    Identity,
    Dense(DenseLayer),
}

impl Projection {
    pub fn linear(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        input_width: usize,
        width: usize,
    ) -> Self {
        Projection::Dense(DenseLayer::new(store, init, name, input_width, width, Activation::None))
    }

    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Projection::Identity => Ok(x),
            Projection::Dense(d) => d.forward(g, x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Projection::Identity => 0,
            Projection::Dense(d) => d.param_count(),
        }
    }

    fn output_width(&self, input_width: usize) -> usize {
        match self {
            Projection::Identity => input_width,
            Projection::Dense(d) => d.output_width(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttentionLayer {
    pub query: Projection,
    pub key: Projection,
    pub value: Projection,
}

/// Result of one attention read: the context and the alignment weights
/// (rows sum to one).
#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    pub context: Var,
    pub weights: Var,
}

impl AttentionLayer {
    pub fn new(query: Projection, key: Projection, value: Projection) -> Self {
        Self { query, key, value }
    }

    pub fn param_count(&self) -> usize {
        self.query.param_count() + self.key.param_count() + self.value.param_count()
    }

    /// Projects keys and values once so that several queries can reuse them.
    pub fn project_memory(&self, g: &mut Graph, keys: Var, values: Var) -> Result<(Var, Var)> {
        let (sk, sv) = (g.shape(keys).to_vec(), g.shape(values).to_vec());
        let rank = sk.len();
        if rank != sv.len() || !(2..=3).contains(&rank) || sk[..rank - 1] != sv[..rank - 1] {
            return Err(shape_err(format!("attention keys {sk:?} and values {sv:?} disagree")));
        }
        Ok((self.key.apply(g, keys)?, self.value.apply(g, values)?))
    }

    /// Attends with queries `[Tq, dq]` (or `[B, Tq, dq]`) over projected
    /// keys and values from [`AttentionLayer::project_memory`].
    pub fn attend(&self, g: &mut Graph, queries: Var, keys: Var, values: Var) -> Result<AttentionOutput> {
        let q = self.query.apply(g, queries)?;
        let (sq, sk) = (g.shape(q).to_vec(), g.shape(keys).to_vec());
        if sq.len() != sk.len() || sq.last() != sk.last() {
            return Err(shape_err(format!(
                "projected queries {sq:?} and keys {sk:?} differ in width"
            )));
        }
        let d_k = *sk.last().unwrap() as f64;
        let raw = g.batch_matmul(q, keys, true)?;
        let score = g.scale(raw, 1.0 / d_k.sqrt())?;
        let weights = g.softmax(score)?;
        let context = g.batch_matmul(weights, values, false)?;
        Ok(AttentionOutput { context, weights })
    }

    /// Full attention read from raw queries, keys and values.
    pub fn forward(&self, g: &mut Graph, q: Var, k: Var, v: Var) -> Result<AttentionOutput> {
        let (pk, pv) = self.project_memory(g, k, v)?;
        self.attend(g, q, pk, pv)
    }

    /// One decoder query per batch row: `[B, dq]` → context `[B, d]`.
    pub fn attend_step(&self, g: &mut Graph, query: Var, keys: Var, values: Var) -> Result<AttentionOutput> {
        let s = g.shape(query).to_vec();
        let [batch, width] = s[..] else {
            return Err(shape_err(format!("step query must be [batch, width], got {s:?}")));
        };
        let q3 = g.reshape(query, &[batch, 1, width])?;
        let out = self.attend(g, q3, keys, values)?;
        let d = self.value.output_width(*g.shape(values).last().unwrap());
        let context = g.reshape(out.context, &[batch, d])?;
        Ok(AttentionOutput { context, weights: out.weights })
    }
}
