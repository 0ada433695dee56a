//! Minimal reverse-mode automatic differentiation over row-major f64 tensors.
//!
//! A [`Graph`] records operations as they are evaluated; nodes are appended in
//! evaluation order, so reverse index order is a valid reverse topological
//! order for [`Graph::backward`]. Every op treats its operand as a matrix whose
//! columns are the last axis and whose rows are everything before it.

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn like(&self, data: Vec<f64>) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `c (+)= op(a) · op(b)` where `op(a)` is `m × k` and `op(b)` is `k × n`.
/// With `ta` set, `a` is stored `k × m`; with `tb` set, `b` is stored `n × k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements and the
    // strides above address them in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mse(Var, Var),
    KlStdNormal(Var, Var),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(usize),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
}

/// Operation tape. Parameters are borrowed, never copied.
#[derive(Debug)]
pub struct Graph<'p> {
    params: &'p [Tensor],
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    /// One entry per parameter; `None` when the parameter was unused.
    pub params: Vec<Option<Tensor>>,
    leaves: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a [`Graph::leaf`] input.
    pub fn leaf(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(v.0).and_then(|g| g.as_ref())
    }
}

const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_B: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_A * (x + GELU_B * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_A * (x + GELU_B * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_A * (1.0 + 3.0 * GELU_B * x * x)
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p [Tensor]) -> Self {
        Graph {
            params,
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(i) => &self.params[*i],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input or constant tensor. Its gradient is reported by [`Gradients::leaf`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, index: usize) -> Var {
        if let Some(v) = self.param_vars[index] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(index),
            op: Op::Param(index),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[index] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err(format!("matmul {:?} x {:?}", ta.shape, tb.shape)));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, false, &mut out, false);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: m × k`, `b: n × k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.cols() != tb.cols() {
            return Err(shape_err(format!("matmul_nt {:?} x {:?}ᵀ", ta.shape, tb.shape)));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, true, &mut out, false);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err(format!("add {:?} + {:?}", ta.shape, tb.shape)));
        }
        let out = ta.like(ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect());
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a length-`cols` row vector to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let cols = ta.cols();
        if tb.len() != cols {
            return Err(shape_err(format!("bias {:?} for rows of width {cols}", tb.shape)));
        }
        let mut out = ta.data.clone();
        for row in out.chunks_exact_mut(cols) {
            for (o, b) in row.iter_mut().zip(&tb.data) {
                *o += b;
            }
        }
        let out = ta.like(out);
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(shape_err(format!("mul {:?} * {:?}", ta.shape, tb.shape)));
        }
        let out = ta.like(ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect());
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let out = ta.like(ta.data.iter().map(|x| x * s).collect());
        self.push(out, Op::Scale(a, s))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.like(ta.data.iter().map(|x| x.exp()).collect());
        self.push(out, Op::Exp(a))
    }

    /// GELU, tanh form.
    pub fn gelu(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out = ta.like(ta.data.iter().map(|&x| gelu(x)).collect());
        self.push(out, Op::Gelu(a))
    }

    /// Max-subtracted softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut out = ta.data.clone();
        for row in out.chunks_exact_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let out = ta.like(out);
        self.push(out, Op::Softmax(a))
    }

    /// Per-row standardization (biased variance, `eps` inside the root)
    /// followed by `gain * x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.cols();
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.len() != d || tb.len() != d {
            return Err(shape_err(format!("layer_norm of width {d} with gain {:?} and bias {:?}", tg.shape, tb.shape)));
        }
        let mut xhat = Vec::with_capacity(tx.len());
        let mut inv_std = Vec::with_capacity(tx.rows());
        let mut out = Vec::with_capacity(tx.len());
        for row in tx.data.chunks_exact(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(h * tg.data[j] + tb.data[j]);
            }
        }
        let out = tx.like(out);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        if start + len > cols || ta.shape.len() != 2 {
            return Err(shape_err(format!("columns {start}..{} of {:?}", start + len, ta.shape)));
        }
        let out: Vec<f64> = ta
            .data
            .chunks_exact(cols)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let rows = ta.rows();
        Ok(self.push(Tensor::matrix(rows, len, out)?, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows || self.value(p).shape.len() != 2) {
            return Err(shape_err("concat_cols operands disagree on row count"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                out.extend_from_slice(&t.data[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Elementwise clamp; the gradient passes only inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let ta = self.value(a);
        let out = ta.like(ta.data.iter().map(|x| x.clamp(lo, hi)).collect());
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err(format!("mse {:?} vs {:?}", ta.shape, tb.shape)));
        }
        let s: f64 = ta.data.iter().zip(&tb.data).map(|(x, y)| (x - y) * (x - y)).sum();
        let n = ta.len() as f64;
        Ok(self.push(Tensor::scalar(s / n), Op::Mse(a, b)))
    }

    /// `Σ ½(μ² + exp(logvar) − 1 − logvar)`: KL of a diagonal Gaussian from N(0, I).
    pub fn kl_std_normal(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let (tm, tl) = (self.value(mu), self.value(logvar));
        if tm.shape != tl.shape {
            return Err(shape_err(format!("kl {:?} vs {:?}", tm.shape, tl.shape)));
        }
        let s = kl_divergence(&tm.data, &tl.data);
        Ok(self.push(Tensor::scalar(s), Op::KlStdNormal(mu, logvar)))
    }

    /// `Σ wᵢ·sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut s = 0.0;
        for &(v, w) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(shape_err("weighted_sum expects scalars"));
            }
            s += w * t.item();
        }
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec())))
    }

    /// `x · w + b` for `x: rows × in`, `w: in × out`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Multi-head scaled dot-product attention over already-projected inputs:
    /// per head `softmax(QₕKₕᵀ/√dₕ)Vₕ`, heads concatenated along columns.
    pub fn multi_head(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let d = self.value(q).cols();
        if heads == 0 || d % heads != 0 {
            return Err(shape_err(format!("width {d} is not divisible by {heads} heads")));
        }
        if self.value(k).cols() != d || self.value(v).cols() != d || self.value(k).rows() != self.value(v).rows() {
            return Err(shape_err("attention query/key/value widths disagree"));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.slice_cols(q, h * dh, dh)?,
                    self.slice_cols(k, h * dh, dh)?,
                    self.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = self.matmul_nt(qh, kh)?;
            let scores = self.scale(scores, scale);
            let weights = self.softmax(scores);
            outs.push(self.matmul(weights, vh)?);
        }
        if heads == 1 {
            Ok(outs[0])
        } else {
            self.concat_cols(&outs)
        }
    }

    /// Full attention: projects queries, keys and values from `x_q`, `x_k`
    /// and `x_v`, runs [`Graph::multi_head`] and applies the output projection.
    /// Self-attention passes the same node three times.
    pub fn attention(&mut self, x_q: Var, x_k: Var, x_v: Var, w: &AttentionWeights, heads: usize) -> Result<Var> {
        let q = self.linear(x_q, w.wq, w.bq)?;
        let k = self.linear(x_k, w.wk, w.bk)?;
        let v = self.linear(x_v, w.wv, w.bv)?;
        let o = self.multi_head(q, k, v, heads)?;
        self.linear(o, w.wo, w.bo)
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(self.value(loss).like(vec![1.0]));
        let mut params: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let emit = |v: Var, t: Tensor, grads: &mut Vec<Option<Tensor>>| match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => leaves[idx] = Some(g),
                Op::Param(i) => params[*i] = Some(g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, nn) = (ta.rows(), ta.cols(), tb.cols());
                    let mut da = vec![0.0; m * k];
                    gemm(m, nn, k, &g.data, false, &tb.data, true, &mut da, false);
                    let mut db = vec![0.0; k * nn];
                    gemm(k, m, nn, &ta.data, true, &g.data, false, &mut db, false);
                    emit(*a, ta.like(da), &mut grads);
                    emit(*b, tb.like(db), &mut grads);
                }
                Op::MatMulNT(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, nn) = (ta.rows(), ta.cols(), tb.rows());
                    let mut da = vec![0.0; m * k];
                    gemm(m, nn, k, &g.data, false, &tb.data, false, &mut da, false);
                    let mut db = vec![0.0; nn * k];
                    gemm(nn, m, k, &g.data, true, &ta.data, false, &mut db, false);
                    emit(*a, ta.like(da), &mut grads);
                    emit(*b, tb.like(db), &mut grads);
                }
                Op::Add(a, b) => {
                    emit(*a, g.clone(), &mut grads);
                    emit(*b, g, &mut grads);
                }
                Op::AddRow(a, b) => {
                    let tb = self.value(*b);
                    let cols = tb.len();
                    let mut db = vec![0.0; cols];
                    for row in g.data.chunks_exact(cols) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    emit(*b, tb.like(db), &mut grads);
                    emit(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = g.data.iter().zip(&tb.data).map(|(g, y)| g * y).collect();
                    let db = g.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                    emit(*a, ta.like(da), &mut grads);
                    emit(*b, tb.like(db), &mut grads);
                }
                Op::Scale(a, s) => {
                    let da = g.data.iter().map(|v| v * s).collect();
                    emit(*a, g.like(da), &mut grads);
                }
                Op::Exp(a) => {
                    let y = self.value(Var(idx));
                    let da = g.data.iter().zip(&y.data).map(|(g, y)| g * y).collect();
                    emit(*a, g.like(da), &mut grads);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let da = g.data.iter().zip(&x.data).map(|(g, &x)| g * gelu_grad(x)).collect();
                    emit(*a, g.like(da), &mut grads);
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(idx));
                    let cols = y.cols();
                    let mut da = Vec::with_capacity(y.len());
                    for (gr, yr) in g.data.chunks_exact(cols).zip(y.data.chunks_exact(cols)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        da.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
                    }
                    emit(*a, g.like(da), &mut grads);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let tg = self.value(*gain);
                    let d = tg.len();
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    let mut dx = Vec::with_capacity(g.len());
                    for ((gr, hr), is) in g.data.chunks_exact(d).zip(xhat.chunks_exact(d)).zip(inv_std) {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dgain[j] += gr[j] * hr[j];
                            dbias[j] += gr[j];
                            let dh = gr[j] * tg.data[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        dx.extend((0..d).map(|j| is * (gr[j] * tg.data[j] - mean_dh - hr[j] * mean_dh_h)));
                    }
                    emit(*gain, tg.like(dgain), &mut grads);
                    emit(*bias, self.value(*bias).like(dbias), &mut grads);
                    emit(*x, g.like(dx), &mut grads);
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let (cols, len) = (ta.cols(), g.cols());
                    let mut da = vec![0.0; ta.len()];
                    for (dr, gr) in da.chunks_exact_mut(cols).zip(g.data.chunks_exact(len)) {
                        dr[*start..*start + len].copy_from_slice(gr);
                    }
                    emit(*a, ta.like(da), &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let tp = self.value(p);
                        let c = tp.cols();
                        let dp = g
                            .data
                            .chunks_exact(total)
                            .flat_map(|r| r[offset..offset + c].iter().copied())
                            .collect();
                        offset += c;
                        emit(p, tp.like(dp), &mut grads);
                    }
                }
                Op::Reshape(a) => {
                    let ta = self.value(*a);
                    emit(*a, ta.like(g.data), &mut grads);
                }
                Op::Clamp(a, lo, hi) => {
                    let ta = self.value(*a);
                    let da = g
                        .data
                        .iter()
                        .zip(&ta.data)
                        .map(|(g, x)| if (*lo..=*hi).contains(x) { *g } else { 0.0 })
                        .collect();
                    emit(*a, ta.like(da), &mut grads);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    emit(*a, ta.like(vec![g.item(); ta.len()]), &mut grads);
                }
                Op::Mse(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let c = 2.0 * g.item() / ta.len() as f64;
                    let da: Vec<f64> = ta.data.iter().zip(&tb.data).map(|(x, y)| c * (x - y)).collect();
                    let db = da.iter().map(|v| -v).collect();
                    emit(*a, ta.like(da), &mut grads);
                    emit(*b, tb.like(db), &mut grads);
                }
                Op::KlStdNormal(mu, lv) => {
                    let (tm, tl) = (self.value(*mu), self.value(*lv));
                    let gi = g.item();
                    emit(*mu, tm.like(tm.data.iter().map(|m| gi * m).collect()), &mut grads);
                    let dl = tl.data.iter().map(|l| gi * 0.5 * (l.exp() - 1.0)).collect();
                    emit(*lv, tl.like(dl), &mut grads);
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        emit(v, Tensor::scalar(w * g.item()).reshaped(&self.value(v).shape)?, &mut grads);
                    }
                }
            }
        }
        Ok(Gradients { params, leaves })
    }
}

/// Attention projection weights (all `d × d`, biases of length `d`).
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Closed-form KL of `N(μ, exp(logvar))` from `N(0, 1)`, summed over elements.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(m, l)| 0.5 * (m * m + l.exp() - 1.0 - l))
        .sum()
}
