//! Dynamic reverse-mode tape.
//!
//! Every forward operation appends one node; node order is a topological
//! order, and [`Graph::backward`] walks it in exact reverse. Parameters are
//! pulled in from a [`ParamStore`] once per graph and their gradients are
//! handed back with [`Graph::param_grads`].

use crate::error::{contract_err, shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

static EMPTY_STORE: ParamStore = ParamStore::new();

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Leaf,
    Param,
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, transpose_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceLast { input: Var, start: usize },
    Reshape(Var),
    TimeProject { x: Var, w: Var, b: Var },
    Sum(Var),
    KlDiv { forecast: Var, target: Var, floor: f64 },
    SquaredError { pred: Var, target: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Leaf => "leaf",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::BatchMatMul { .. } => "batch_matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::Concat { .. } => "concat",
            Op::SliceLast { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::TimeProject { .. } => "time_project",
            Op::Sum(_) => "sum",
            Op::KlDiv { .. } => "kl_div",
            Op::SquaredError { .. } => "squared_error",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// An append-only record of one forward pass.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Self::new(&EMPTY_STORE)
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` call with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Domain(format!("{} produced a non-finite value", op.name())));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Input data that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Constant, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A free differentiable input, mostly useful for gradient checks.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Brings a stored parameter onto the tape (once per graph).
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let mut value = self.store.get(id).clone();
        value.grad = None;
        value.requires_grad = false;
        self.nodes.push(Node { value, op: Op::Param, needs_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `a[..., k] × b[k, n] → [..., n]`; leading axes of `a` are flattened.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(shape_err(format!("matmul of {sa:?} and {sb:?}")));
        }
        let k = sb[0];
        let n = sb[1];
        let m = self.value(a).len() / k;
        let mut out_shape = sa[..sa.len() - 1].to_vec();
        out_shape.push(n);
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::new(out_shape, out)?, Op::MatMul(a, b), ng)
    }

    /// Batched product: `a[B, m, k] × b[B, k, n]`, or `× b[B, n, k]ᵀ` when
    /// `transpose_b`. Rank-2 operands are a batch of one.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let dims = bmm_dims(&sa, &sb, transpose_b)
            .ok_or_else(|| shape_err(format!("batch matmul of {sa:?} and {sb:?}")))?;
        let BmmDims { batch, m, k, n } = dims;
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            let ab = &av[bi * m * k..(bi + 1) * m * k];
            let bb = &bv[bi * k * n..(bi + 1) * k * n];
            let ob = &mut out[bi * m * n..(bi + 1) * m * n];
            if transpose_b {
                gemm_nt(ab, bb, ob, m, k, n);
            } else {
                gemm(ab, bb, ob, m, k, n);
            }
        }
        let shape = if sa.len() == 2 { vec![m, n] } else { vec![batch, m, n] };
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::new(shape, out)?, Op::BatchMatMul { a, b, transpose_b }, ng)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(format!("{} of {sa:?} and {sb:?}", op.name())));
        }
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(sa.to_vec(), out)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(t, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `x[..., n] + bias[n]`, broadcast over leading axes.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let n = *sx.last().unwrap();
        if sb.len() != 1 || sb[0] != n {
            return Err(shape_err(format!("bias {sb:?} does not fit {sx:?}")));
        }
        let bv = self.value(bias).values();
        let out: Vec<f64> =
            self.value(x).values().iter().enumerate().map(|(i, v)| v + bv[i % n]).collect();
        let t = Tensor::new(sx.to_vec(), out)?;
        let ng = self.needs(x) || self.needs(bias);
        self.push(t, Op::AddBias(x, bias), ng)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let out: Vec<f64> = self.value(x).values().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let ng = self.needs(x);
        self.push(t, op, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.all_finite() {
            return Err(Error::Domain("softmax of non-finite input".into()));
        }
        let n = xv.last_dim();
        let mut out = xv.values().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        let ng = self.needs(x);
        self.push(t, Op::Softmax(x), ng)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| shape_err("concat of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut axis_total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err(format!("concat of {base:?} and {s:?} on axis {axis}")));
            }
            axis_total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v).values()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_total;
        let ng = inputs.iter().any(|&v| self.needs(v));
        self.push(Tensor::new(shape, out)?, Op::Concat { inputs: inputs.to_vec(), axis }, ng)
    }

    /// `x[..., start..start + len]` along the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().unwrap();
        if len == 0 || start + len > n {
            return Err(shape_err(format!("slice {start}..{} of {s:?}", start + len)));
        }
        let out: Vec<f64> = self
            .value(x)
            .values()
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let ng = self.needs(x);
        self.push(Tensor::new(shape, out)?, Op::SliceLast { input: x, start }, ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        let ng = self.needs(x);
        self.push(t, Op::Reshape(x), ng)
    }

    /// Linear map across the time axis:
    /// `y[b, s, f] = Σ_t w[t, s] · x[b, t, f] + bias[s]`.
    /// A rank-2 `x[T, F]` is a batch of one.
    pub fn time_project(&mut self, x: Var, w: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let sb = self.shape(bias).to_vec();
        let (batch, steps, feat) = match sx.as_slice() {
            [t, f] => (1, *t, *f),
            [b, t, f] => (*b, *t, *f),
            _ => return Err(shape_err(format!("time projection input {sx:?}"))),
        };
        if sw.len() != 2 || sw[0] != steps || sb != [sw[1]] {
            return Err(shape_err(format!(
                "time projection weights {sw:?}/{sb:?} do not fit {steps} input steps"
            )));
        }
        let out_steps = sw[1];
        let xv = self.value(x).values();
        let wv = self.value(w).values();
        let bv = self.value(bias).values();
        let mut out = vec![0.0; batch * out_steps * feat];
        for b in 0..batch {
            let xb = &xv[b * steps * feat..(b + 1) * steps * feat];
            let ob = &mut out[b * out_steps * feat..(b + 1) * out_steps * feat];
            for (s, orow) in ob.chunks_mut(feat).enumerate() {
                orow.fill(bv[s]);
            }
            for t in 0..steps {
                let xrow = &xb[t * feat..(t + 1) * feat];
                for s in 0..out_steps {
                    let wts = wv[t * out_steps + s];
                    if wts == 0.0 {
                        continue;
                    }
                    let orow = &mut ob[s * feat..(s + 1) * feat];
                    for (o, &xf) in orow.iter_mut().zip(xrow) {
                        *o += wts * xf;
                    }
                }
            }
        }
        let shape = if sx.len() == 2 { vec![out_steps, feat] } else { vec![batch, out_steps, feat] };
        let ng = self.needs(x) || self.needs(w) || self.needs(bias);
        self.push(Tensor::new(shape, out)?, Op::TimeProject { x, w, b: bias }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).values().iter().sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// `Σ −p · ln(max(f, floor) / p)` over all entries; entries with `p = 0`
    /// contribute nothing.
    pub fn kl_div(&mut self, forecast: Var, target: Var, floor: f64) -> Result<Var> {
        let (sf, st) = (self.shape(forecast), self.shape(target));
        if sf != st {
            return Err(contract_err(format!("kl divergence of {sf:?} against {st:?}")));
        }
        if floor <= 0.0 {
            return Err(contract_err("kl floor must be positive"));
        }
        let total: f64 = self
            .value(forecast)
            .values()
            .iter()
            .zip(self.value(target).values())
            .filter(|(_, &p)| p > 0.0)
            .map(|(&f, &p)| -p * (f.max(floor) / p).ln())
            .sum();
        let ng = self.needs(forecast) || self.needs(target);
        self.push(Tensor::scalar(total), Op::KlDiv { forecast, target, floor }, ng)
    }

    /// `Σ (pred − target)²` over all entries.
    pub fn squared_error(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(contract_err(format!("squared error of {sp:?} against {st:?}")));
        }
        let total: f64 = self
            .value(pred)
            .values()
            .iter()
            .zip(self.value(target).values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let ng = self.needs(pred) || self.needs(target);
        self.push(Tensor::scalar(total), Op::SquaredError { pred, target }, ng)
    }

    /// Reverse sweep from a scalar node. Gradients accumulate additively
    /// across fan-out and replace those of any earlier sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(contract_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, v: Var, len: usize) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Constant | Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let k = self.shape(b)[0];
                let n = self.shape(b)[1];
                let m = self.value(a).len() / k;
                let av = self.value(a).values().to_vec();
                let bv = self.value(b).values().to_vec();
                if let Some(ga) = self.acc(a, m * k) {
                    gemm_nt(g, &bv, ga, m, n, k);
                }
                if let Some(gb) = self.acc(b, k * n) {
                    gemm_tn(&av, g, gb, m, k, n);
                }
            }
            Op::BatchMatMul { a, b, transpose_b } => {
                let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
                let BmmDims { batch, m, k, n } = bmm_dims(&sa, &sb, transpose_b).unwrap();
                let av = self.value(a).values().to_vec();
                let bv = self.value(b).values().to_vec();
                if let Some(ga) = self.acc(a, batch * m * k) {
                    for bi in 0..batch {
                        let gb_ = &g[bi * m * n..(bi + 1) * m * n];
                        let bb = &bv[bi * k * n..(bi + 1) * k * n];
                        let out = &mut ga[bi * m * k..(bi + 1) * m * k];
                        if transpose_b {
                            // b is [n, k]
                            gemm(gb_, bb, out, m, n, k);
                        } else {
                            gemm_nt(gb_, bb, out, m, n, k);
                        }
                    }
                }
                if let Some(gbuf) = self.acc(b, batch * k * n) {
                    for bi in 0..batch {
                        let gb_ = &g[bi * m * n..(bi + 1) * m * n];
                        let ab = &av[bi * m * k..(bi + 1) * m * k];
                        let out = &mut gbuf[bi * k * n..(bi + 1) * k * n];
                        if transpose_b {
                            // d b[n, k] = gᵀ[n, m] × a[m, k]
                            gemm_tn(gb_, ab, out, m, n, k);
                        } else {
                            gemm_tn(ab, gb_, out, m, k, n);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(a, g.len()) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = self.acc(b, g.len()) {
                    axpy(gb, g, 1.0);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(a, g.len()) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = self.acc(b, g.len()) {
                    axpy(gb, g, -1.0);
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(a).values().to_vec();
                let bv = self.value(b).values().to_vec();
                if let Some(ga) = self.acc(a, g.len()) {
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(&bv) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = self.acc(b, g.len()) {
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(&av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::AddBias(x, bias) => {
                let n = self.shape(bias)[0];
                if let Some(gx) = self.acc(x, g.len()) {
                    axpy(gx, g, 1.0);
                }
                if let Some(gb) = self.acc(bias, n) {
                    for row in g.chunks(n) {
                        axpy(gb, row, 1.0);
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.acc(x, g.len()) {
                    axpy(gx, g, c);
                }
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[i].value.values().to_vec();
                if let Some(gx) = self.acc(x, g.len()) {
                    for ((o, gi), yi) in gx.iter_mut().zip(g).zip(&y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Tanh(x) => {
                let y = self.nodes[i].value.values().to_vec();
                if let Some(gx) = self.acc(x, g.len()) {
                    for ((o, gi), yi) in gx.iter_mut().zip(g).zip(&y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Softmax(x) => {
                let y = self.nodes[i].value.values().to_vec();
                let n = self.nodes[i].value.last_dim();
                if let Some(gx) = self.acc(x, g.len()) {
                    for ((orow, grow), yrow) in gx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((o, gi), yi) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let chunk = self.shape(v)[axis] * inner;
                    let len = self.value(v).len();
                    if let Some(gv) = self.acc(v, len) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            axpy(&mut gv[o * chunk..(o + 1) * chunk], src, 1.0);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::SliceLast { input, start } => {
                let n = self.value(input).last_dim();
                let len = self.nodes[i].value.last_dim();
                let total = self.value(input).len();
                if let Some(gx) = self.acc(input, total) {
                    for (orow, grow) in gx.chunks_mut(n).zip(g.chunks(len)) {
                        axpy(&mut orow[start..start + len], grow, 1.0);
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = self.acc(x, g.len()) {
                    axpy(gx, g, 1.0);
                }
            }
            Op::TimeProject { x, w, b } => {
                let sx = self.shape(x).to_vec();
                let (batch, steps, feat) = match sx.as_slice() {
                    [t, f] => (1, *t, *f),
                    [bb, t, f] => (*bb, *t, *f),
                    _ => unreachable!(),
                };
                let out_steps = self.shape(w)[1];
                let xv = self.value(x).values().to_vec();
                let wv = self.value(w).values().to_vec();
                if let Some(gx) = self.acc(x, xv.len()) {
                    for bi in 0..batch {
                        let gb = &g[bi * out_steps * feat..(bi + 1) * out_steps * feat];
                        let ob = &mut gx[bi * steps * feat..(bi + 1) * steps * feat];
                        // dx_b[t, f] = Σ_s w[t, s] g_b[s, f]
                        gemm(&wv, gb, ob, steps, out_steps, feat);
                    }
                }
                if let Some(gw) = self.acc(w, steps * out_steps) {
                    for bi in 0..batch {
                        let gb = &g[bi * out_steps * feat..(bi + 1) * out_steps * feat];
                        let xb = &xv[bi * steps * feat..(bi + 1) * steps * feat];
                        // dw[t, s] = Σ_f x_b[t, f] g_b[s, f]
                        gemm_nt(xb, gb, gw, steps, feat, out_steps);
                    }
                }
                if let Some(gbias) = self.acc(b, out_steps) {
                    for (r, row) in g.chunks(feat).enumerate() {
                        gbias[r % out_steps] += row.iter().sum::<f64>();
                    }
                }
            }
            Op::Sum(x) => {
                let len = self.value(x).len();
                if let Some(gx) = self.acc(x, len) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::KlDiv { forecast, target, floor } => {
                let f = self.value(forecast).values().to_vec();
                let p = self.value(target).values().to_vec();
                if let Some(gf) = self.acc(forecast, f.len()) {
                    for ((o, &fi), &pi) in gf.iter_mut().zip(&f).zip(&p) {
                        if pi > 0.0 && fi > floor {
                            *o -= g[0] * pi / fi;
                        }
                    }
                }
                if let Some(gp) = self.acc(target, p.len()) {
                    for ((o, &fi), &pi) in gp.iter_mut().zip(&f).zip(&p) {
                        if pi > 0.0 {
                            *o += g[0] * (pi.ln() + 1.0 - fi.max(floor).ln());
                        }
                    }
                }
            }
            Op::SquaredError { pred, target } => {
                let a = self.value(pred).values().to_vec();
                let b = self.value(target).values().to_vec();
                if let Some(gp) = self.acc(pred, a.len()) {
                    for ((o, x), y) in gp.iter_mut().zip(&a).zip(&b) {
                        *o += 2.0 * g[0] * (x - y);
                    }
                }
                if let Some(gt) = self.acc(target, b.len()) {
                    for ((o, x), y) in gt.iter_mut().zip(&a).zip(&b) {
                        *o -= 2.0 * g[0] * (x - y);
                    }
                }
            }
        }
    }

    /// Gradients of every parameter that took part in the last backward pass.
    pub fn param_grads(&self) -> Vec<(ParamId, &[f64])> {
        self.param_vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                self.grad(v).map(|g| (ParamId(i), g))
            })
            .collect()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

struct BmmDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

fn bmm_dims(sa: &[usize], sb: &[usize], transpose_b: bool) -> Option<BmmDims> {
    if sa.len() != sb.len() || !(2..=3).contains(&sa.len()) {
        return None;
    }
    let (batch, a, b) = if sa.len() == 3 {
        if sa[0] != sb[0] {
            return None;
        }
        (sa[0], &sa[1..], &sb[1..])
    } else {
        (1, sa, sb)
    };
    let (m, k) = (a[0], a[1]);
    let (kb, n) = if transpose_b { (b[1], b[0]) } else { (b[0], b[1]) };
    (k == kb).then_some(BmmDims { batch, m, k, n })
}

fn axpy(out: &mut [f64], x: &[f64], alpha: f64) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// `out[m, n] += a[m, k] × b[k, n]`
fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `out[m, n] += a[m, k] × b[n, k]ᵀ`
fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k, n] += a[m, k]ᵀ × b[m, n]`
fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::default();
        let i2 = g.constant(Tensor::identity(2));
        let m = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let y = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(y).values(), &[1., 2., 3., 4.]);

        let a = g.constant(t(&[1, 2], &[1., 2.]));
        let b = g.constant(t(&[2, 1], &[3., 4.]));
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).values(), &[11.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::default();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.matches("[2, 3]").count() == 2, "{err}");
    }

    #[test]
    fn softmax_cases() {
        let mut g = Graph::default();
        let x = g.constant(t(&[4], &[0.; 4]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).values(), &[0.25; 4]);

        let x = g.constant(t(&[2], &[1f64.ln(), 3f64.ln()]));
        let y = g.softmax(x).unwrap();
        let v = g.value(y).values();
        assert!((v[0] - 0.25).abs() < 1e-15 && (v[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let mut g = Graph::default();
        let x = g.constant(t(&[2], &[1000., 0.]));
        let y = g.softmax(x).unwrap();
        // exp(-1000) underflows to 0 in f64; an arbitrary-precision evaluation
        // gives 1 - 5.07e-435 and 5.07e-435, both exactly representable as 1 and 0.
        assert_eq!(g.value(y).values(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut g = Graph::default();
        let x = g.constant(t(&[2], &[f64::NAN, 0.]));
        assert!(matches!(g.softmax(x), Err(Error::Domain(_))));
    }

    #[test]
    fn elementwise_basics() {
        let mut g = Graph::default();
        let x = g.constant(t(&[1], &[0.]));
        let s = g.sigmoid(x).unwrap();
        let th = g.tanh(x).unwrap();
        assert_eq!(g.value(s).item(), 0.5);
        assert_eq!(g.value(th).item(), 0.0);
        let a = g.constant(Tensor::zeros([2]));
        let b = g.constant(Tensor::zeros([3]));
        assert!(matches!(g.add(a, b), Err(Error::Shape(_))));
        assert!(matches!(g.mul(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_shapes() {
        let mut g = Graph::default();
        let a = g.constant(t(&[2], &[1., 2.]));
        let b = g.constant(t(&[1], &[3.]));
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).values(), &[1., 2., 3.]);

        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([2, 2]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 5]);
        let d = g.constant(Tensor::zeros([3, 2]));
        assert!(matches!(g.concat(&[a, d], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_gradient_routes_to_sources() {
        let mut g = Graph::default();
        let a = g.leaf(t(&[2, 3], &[1., 2., 3., 4., 5., 6.]));
        let b = g.leaf(t(&[2, 2], &[7., 8., 9., 10.]));
        let c = g.concat(&[a, b], 1).unwrap();
        let s = g.sum(c).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0; 6]);
        assert_eq!(g.grad(b).unwrap(), &[1.0; 4]);
    }

    #[test]
    fn backward_simple_cases() {
        let mut g = Graph::default();
        let x = g.leaf(t(&[2, 2], &[1., -2., 3., 0.5]));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 4]);

        let mut g = Graph::default();
        let x = g.leaf(t(&[2], &[2., 3.]));
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[4., 6.]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::default();
        let x = g.leaf(t(&[1], &[0.7]));
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::default();
        let x = g.leaf(Tensor::zeros([3]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::default();
        let c = g.constant(t(&[2], &[1., 2.]));
        let x = g.leaf(t(&[2], &[3., 4.]));
        let y = g.mul(c, x).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap(), &[1., 2.]);
    }

    #[test]
    fn kl_clamp_keeps_loss_finite() {
        let mut g = Graph::default();
        let f = g.leaf(t(&[2], &[0.0, 1.0]));
        let p = g.constant(t(&[2], &[1.0, 0.0]));
        let kl = g.kl_div(f, p, 1e-9).unwrap();
        let v = g.value(kl).item();
        assert!((v - (-(1e-9f64).ln())).abs() < 1e-12);
        assert!((v - 20.723).abs() < 1e-3);
    }
}
