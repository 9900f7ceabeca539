//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so walking the node list backwards
//! is a reverse topological traversal.

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{matmul_nt, matmul_tn, softmax_rows, Tensor};
use crate::error::{Error, Result};

/// Probability floor applied before `ln` in cross-entropy.
pub const CE_EPS: f64 = 1e-12;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Gelu(Var),
    Softplus(Var),
    Softmax(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize),
    Reshape(Var),
    Mean(Var),
    Sum(Var),
    CrossEntropy(Var, Tensor),
    Mse(Var, Var),
    LayerNorm(Var, f64),
    Gaussian(Var),
    Unfold {
        x: Var,
        blocks: usize,
        kernel: usize,
        stride: usize,
    },
    BlockMean(Var, usize),
    PairwiseSum(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A parameter leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).len() != 2 {
            return Err(Error::dim("transpose", format!("{:?}", self.shape(a))));
        }
        let out = self.value(a).transpose();
        Ok(self.push(out, Op::Transpose(a)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("zip shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn row_broadcast(
        &self,
        op: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tr) = (self.value(a), self.value(row));
        let n = ta.cols();
        if tr.len() != n {
            return Err(Error::dim(op, format!("{:?} vs row {:?}", ta.shape(), tr.shape())));
        }
        let mut out = ta.clone();
        for r in out.data_mut().chunks_mut(n.max(1)) {
            for (v, &b) in r.iter_mut().zip(tr.data()) {
                *v = f(*v, b);
            }
        }
        Ok(out)
    }

    /// Adds a length-`n` row to every row of an `m × n` matrix (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("add_row", a, row, |x, y| x + y)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies every row by a length-`n` row (per-feature gain).
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("mul_row", a, row, |x, y| x * y)?;
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        let (m, n) = (ta.rows(), ta.cols());
        if tc.len() != m {
            return Err(Error::dim("mul_col", format!("{:?} vs col {:?}", ta.shape(), tc.shape())));
        }
        let mut out = ta.clone();
        for (i, r) in out.data_mut().chunks_mut(n.max(1)).enumerate() {
            let s = tc.data()[i];
            r.iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        let out = self.value(a).map(f64::ln);
        Ok(self.push(out, Op::Log(a)))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()));
        self.push(out, Op::Gelu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.push(out, Op::Softmax(a))
    }

    /// Concatenation along the last dimension.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::dim(
                "concat_cols",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (m, na, nb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let mut shape = ta.shape().to_vec();
        if shape.is_empty() {
            shape.push(1);
        }
        *shape.last_mut().unwrap() = na + nb;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        if start > end || end > n {
            return Err(Error::dim("slice_cols", format!("{start}..{end} of {n}")));
        }
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&ta.row(i)[start..end]);
        }
        let out = Tensor::matrix(m, end - start, data)?;
        Ok(self.push(out, Op::SliceCols(a, start, end)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        let (m, n) = (ta.rows(), ta.cols());
        if start > end || end > m {
            return Err(Error::dim("slice_rows", format!("{start}..{end} of {m}")));
        }
        let out = Tensor::matrix(end - start, n, ta.data()[start * n..end * n].to_vec())?;
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean over rows of `-Σ_c target·ln(max(pred, ε))`.
    ///
    /// `pred` rows are probability vectors; `target` is a constant.
    pub fn cross_entropy(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::dim(
                "cross_entropy",
                format!("{:?} vs {:?}", p.shape(), target.shape()),
            ));
        }
        let rows = p.rows().max(1) as f64;
        let loss = -p
            .data()
            .iter()
            .zip(target.data())
            .map(|(&q, &t)| if t == 0.0 { 0.0 } else { t * q.max(CE_EPS).ln() })
            .sum::<f64>()
            / rows;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(pred, target.clone())))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.len().max(1) as f64;
        let v = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor::scalar(v), Op::Mse(a, b)))
    }

    /// Row-wise standardization without affine terms.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let mut out = self.value(a).clone();
        let n = out.cols();
        for r in out.data_mut().chunks_mut(n.max(1)) {
            let mean = r.iter().sum::<f64>() / n as f64;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            r.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        self.push(out, Op::LayerNorm(a, eps))
    }

    /// Row-normalized Gaussian neighbour weights from per-position scales.
    ///
    /// `sigma` has `L` entries; the result is `L × L`.
    pub fn gaussian_weights(&mut self, sigma: Var) -> Result<Var> {
        let out = gaussian_kernel(self.value(sigma).data())?;
        Ok(self.push(out, Op::Gaussian(sigma)))
    }

    /// Sliding-window unfolding over `blocks` stacked sequences.
    ///
    /// `x` is `(blocks·t) × c`; output row `(b, o)` concatenates input rows
    /// `b·t + o·stride .. + kernel`, giving `(blocks·t_out) × (kernel·c)`.
    pub fn unfold(&mut self, x: Var, blocks: usize, kernel: usize, stride: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, c) = (tx.rows(), tx.cols());
        if blocks == 0 || rows % blocks != 0 || stride == 0 || kernel == 0 {
            return Err(Error::dim("unfold", format!("{rows} rows in {blocks} blocks")));
        }
        let t = rows / blocks;
        if t < kernel {
            return Err(Error::dim("unfold", format!("length {t} < kernel {kernel}")));
        }
        let t_out = (t - kernel) / stride + 1;
        let mut data = Vec::with_capacity(blocks * t_out * kernel * c);
        for b in 0..blocks {
            for o in 0..t_out {
                let start = b * t + o * stride;
                data.extend_from_slice(&tx.data()[start * c..(start + kernel) * c]);
            }
        }
        let out = Tensor::matrix(blocks * t_out, kernel * c, data)?;
        Ok(self.push(
            out,
            Op::Unfold {
                x,
                blocks,
                kernel,
                stride,
            },
        ))
    }

    /// Mean of each of `blocks` consecutive row groups.
    pub fn block_mean(&mut self, x: Var, blocks: usize) -> Result<Var> {
        let tx = self.value(x);
        let (rows, c) = (tx.rows(), tx.cols());
        if blocks == 0 || rows % blocks != 0 {
            return Err(Error::dim("block_mean", format!("{rows} rows in {blocks} blocks")));
        }
        let t = rows / blocks;
        let mut data = vec![0.0; blocks * c];
        for b in 0..blocks {
            for r in 0..t {
                for j in 0..c {
                    data[b * c + j] += tx.data()[(b * t + r) * c + j];
                }
            }
        }
        data.iter_mut().for_each(|v| *v /= t as f64);
        let out = Tensor::matrix(blocks, c, data)?;
        Ok(self.push(out, Op::BlockMean(x, blocks)))
    }

    /// All ordered pair sums: row `i·L + j` is `a_i + b_j`.
    pub fn pairwise_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(Error::dim(
                "pairwise_sum",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (la, lb, h) = (ta.rows(), tb.rows(), ta.cols());
        let mut data = Vec::with_capacity(la * lb * h);
        for i in 0..la {
            for j in 0..lb {
                data.extend(ta.row(i).iter().zip(tb.row(j)).map(|(x, y)| x + y));
            }
        }
        let out = Tensor::matrix(la * lb, h, data)?;
        Ok(self.push(out, Op::PairwiseSum(a, b)))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let max_param = self
            .nodes
            .iter()
            .filter_map(|n| n.param)
            .map(|p| p.0 + 1)
            .max()
            .unwrap_or(0);
        let mut out = Gradients::with_capacity(max_param);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(pid) = node.param {
                out.accumulate(pid, node.value.shape(), &g);
            }
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(out)
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Vec<f64>| match &mut grads[v.0] {
            Some(e) => e.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(d),
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                acc(*a, matmul_nt(g, tb.data(), m, n, k));
                acc(*b, matmul_tn(ta.data(), g, m, k, n));
            }
            Op::Transpose(a) => {
                let (m, n) = (y.rows(), y.cols());
                let gt = Tensor::matrix(m, n, g.to_vec()).expect("grad").transpose();
                acc(*a, gt.into_data());
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                acc(*a, g.iter().zip(tb.data()).map(|(x, y)| x * y).collect());
                acc(*b, g.iter().zip(ta.data()).map(|(x, y)| x * y).collect());
            }
            Op::AddRow(a, row) => {
                let n = y.cols();
                let mut gr = vec![0.0; n];
                for r in g.chunks(n.max(1)) {
                    gr.iter_mut().zip(r).for_each(|(s, v)| *s += v);
                }
                acc(*a, g.to_vec());
                acc(*row, gr);
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (val(*a), val(*row));
                let n = y.cols();
                let mut ga = g.to_vec();
                let mut gr = vec![0.0; n];
                for (i, r) in ga.chunks_mut(n.max(1)).enumerate() {
                    for j in 0..n {
                        gr[j] += r[j] * ta.data()[i * n + j];
                        r[j] *= tr.data()[j];
                    }
                }
                acc(*a, ga);
                acc(*row, gr);
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (val(*a), val(*col));
                let n = y.cols();
                let mut ga = g.to_vec();
                let mut gc = vec![0.0; tc.len()];
                for (i, r) in ga.chunks_mut(n.max(1)).enumerate() {
                    let s = tc.data()[i];
                    for j in 0..n {
                        gc[i] += r[j] * ta.data()[i * n + j];
                        r[j] *= s;
                    }
                }
                acc(*a, ga);
                acc(*col, gc);
            }
            Op::Scale(a, f) => acc(*a, g.iter().map(|v| v * f).collect()),
            Op::AddScalar(a) => acc(*a, g.to_vec()),
            Op::Tanh(a) => acc(
                *a,
                g.iter().zip(y.data()).map(|(d, t)| d * (1.0 - t * t)).collect(),
            ),
            Op::Exp(a) => acc(*a, g.iter().zip(y.data()).map(|(d, e)| d * e).collect()),
            Op::Log(a) => acc(*a, g.iter().zip(val(*a).data()).map(|(d, x)| d / x).collect()),
            Op::Gelu(a) => acc(
                *a,
                g.iter()
                    .zip(val(*a).data())
                    .map(|(d, &x)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        d * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    })
                    .collect(),
            ),
            Op::Softplus(a) => acc(
                *a,
                g.iter().zip(val(*a).data()).map(|(d, &x)| d * sigmoid(x)).collect(),
            ),
            Op::Softmax(a) => {
                let n = y.cols();
                let mut ga = vec![0.0; g.len()];
                for ((gr, yr), out) in g.chunks(n).zip(y.data().chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out[j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::ConcatCols(a, b) => {
                let na = val(*a).cols();
                let n = y.cols();
                let mut ga = Vec::with_capacity(val(*a).len());
                let mut gb = Vec::with_capacity(val(*b).len());
                for r in g.chunks(n) {
                    ga.extend_from_slice(&r[..na]);
                    gb.extend_from_slice(&r[na..]);
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::SliceCols(a, start, end) => {
                let n = val(*a).cols();
                let w = end - start;
                let mut ga = vec![0.0; val(*a).len()];
                if w > 0 {
                    for (i, r) in g.chunks(w).enumerate() {
                        ga[i * n + start..i * n + end].copy_from_slice(r);
                    }
                }
                acc(*a, ga);
            }
            Op::SliceRows(a, start) => {
                let n = val(*a).cols();
                let mut ga = vec![0.0; val(*a).len()];
                ga[start * n..start * n + g.len()].copy_from_slice(g);
                acc(*a, ga);
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Mean(a) => {
                let n = val(*a).len().max(1);
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Sum(a) => acc(*a, vec![g[0]; val(*a).len()]),
            Op::CrossEntropy(p, target) => {
                let tp = val(*p);
                let rows = tp.rows().max(1) as f64;
                acc(
                    *p,
                    tp.data()
                        .iter()
                        .zip(target.data())
                        .map(|(&q, &t)| if q > CE_EPS { -g[0] * t / (q * rows) } else { 0.0 })
                        .collect(),
                );
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let n = ta.len().max(1) as f64;
                let d: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| 2.0 * (x - y) / n * g[0])
                    .collect();
                acc(*b, d.iter().map(|v| -v).collect());
                acc(*a, d);
            }
            Op::LayerNorm(a, eps) => {
                let ta = val(*a);
                let n = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (i, out) in ga.chunks_mut(n).enumerate() {
                    let xr = ta.row(i);
                    let mean = xr.iter().sum::<f64>() / n as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gr = &g[i * n..(i + 1) * n];
                    let yr = y.row(i);
                    let gm = gr.iter().sum::<f64>() / n as f64;
                    let gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        out[j] = inv * (gr[j] - gm - yr[j] * gy);
                    }
                }
                acc(*a, ga);
            }
            Op::Gaussian(s) => {
                let sig = val(*s).data();
                let l = sig.len();
                let mut gs = vec![0.0; l];
                for i in 0..l {
                    let s3 = sig[i] * sig[i] * sig[i];
                    let gr = &g[i * l..(i + 1) * l];
                    let yr = y.row(i);
                    let mean_d2: f64 = (0..l).map(|j| yr[j] * sq_dist(i, j)).sum();
                    gs[i] = (0..l)
                        .map(|j| gr[j] * yr[j] * (sq_dist(i, j) - mean_d2) / s3)
                        .sum();
                }
                acc(*s, gs);
            }
            Op::Unfold {
                x,
                blocks,
                kernel,
                stride,
            } => {
                let tx = val(*x);
                let c = tx.cols();
                let t = tx.rows() / blocks;
                let t_out = (t - kernel) / stride + 1;
                let mut gx = vec![0.0; tx.len()];
                let w = kernel * c;
                for b in 0..*blocks {
                    for o in 0..t_out {
                        let start = (b * t + o * stride) * c;
                        let gr = &g[(b * t_out + o) * w..(b * t_out + o + 1) * w];
                        gx[start..start + w].iter_mut().zip(gr).for_each(|(a, v)| *a += v);
                    }
                }
                acc(*x, gx);
            }
            Op::BlockMean(x, blocks) => {
                let tx = val(*x);
                let c = tx.cols();
                let t = tx.rows() / blocks;
                let mut gx = vec![0.0; tx.len()];
                for b in 0..*blocks {
                    for r in 0..t {
                        for j in 0..c {
                            gx[(b * t + r) * c + j] = g[b * c + j] / t as f64;
                        }
                    }
                }
                acc(*x, gx);
            }
            Op::PairwiseSum(a, b) => {
                let (la, lb, h) = (val(*a).rows(), val(*b).rows(), y.cols());
                let mut ga = vec![0.0; la * h];
                let mut gb = vec![0.0; lb * h];
                for i in 0..la {
                    for j in 0..lb {
                        let r = &g[(i * lb + j) * h..(i * lb + j + 1) * h];
                        for k in 0..h {
                            ga[i * h + k] += r[k];
                            gb[j * h + k] += r[k];
                        }
                    }
                }
                acc(*a, ga);
                acc(*b, gb);
            }
        }
    }
}

fn sq_dist(i: usize, j: usize) -> f64 {
    let d = i as f64 - j as f64;
    d * d
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `G[i,j] ∝ (1/(√(2π)σ_i))·exp(−|j−i|²/(2σ_i²))`, each row rescaled to sum 1.
pub fn gaussian_kernel(sigma: &[f64]) -> Result<Tensor> {
    let l = sigma.len();
    if let Some(bad) = sigma.iter().find(|&&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Contract(format!("gaussian scale must be positive, got {bad}")));
    }
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let mut data = vec![0.0; l * l];
    for (i, row) in data.chunks_mut(l.max(1)).enumerate() {
        let s = sigma[i];
        let pre = 1.0 / (norm * s);
        for (j, v) in row.iter_mut().enumerate() {
            *v = pre * (-sq_dist(i, j) / (2.0 * s * s)).exp();
        }
        // The diagonal term keeps the sum positive even when far entries underflow.
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
            row[i] = 1.0;
        }
    }
    Tensor::matrix(l, l, data)
}
