//! Reverse-mode automatic differentiation over a linear operation tape.
//!
//! Every forward op appends a node holding its value and the data its
//! backward rule needs. `backward` walks the nodes in reverse insertion
//! order, which is a reverse topological order because parents always
//! precede children.

use std::collections::HashMap;

use super::fft;
use super::params::{ParamId, ParamStore};
use super::tensor::{axis_split, broadcast_offsets, broadcast_shape, broadcast_strides, strides, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum Reduce {
    Sum,
    Mean,
    Variance,
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise map with its pointwise derivative saved at forward time.
    Unary {
        x: Var,
        deriv: Vec<f64>,
    },
    Binary {
        kind: BinKind,
        a: Var,
        b: Var,
    },
    Hypot {
        a: Var,
        b: Var,
    },
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        a_shared: bool,
        b_shared: bool,
    },
    Permute {
        x: Var,
        src_offsets: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Reduce {
        kind: Reduce,
        x: Var,
        axis: usize,
    },
    Max {
        x: Var,
        argmax: Vec<usize>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        axis: usize,
        inv_std: Vec<f64>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    IndexSelect {
        x: Var,
        axis: usize,
        indices: Vec<usize>,
    },
    Unfold {
        x: Var,
        kernel: usize,
        stride: usize,
        pad_left: usize,
    },
    SegmentConv {
        x: Var,
        w: Var,
        bounds: Vec<usize>,
    },
    Rfft {
        x: Var,
        n: usize,
    },
    Irfft {
        z: Var,
        n: usize,
    },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Unary { x, .. }
            | Op::Permute { x, .. }
            | Op::Reshape { x }
            | Op::Reduce { x, .. }
            | Op::Max { x, .. }
            | Op::Softmax { x, .. }
            | Op::LogSoftmax { x, .. }
            | Op::LayerNorm { x, .. }
            | Op::Narrow { x, .. }
            | Op::IndexSelect { x, .. }
            | Op::Unfold { x, .. }
            | Op::Rfft { x, .. } => vec![*x],
            Op::Irfft { z, .. } => vec![*z],
            Op::Binary { a, b, .. } | Op::Hypot { a, b } | Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::SegmentConv { x, w, .. } => vec![*x, *w],
            Op::Concat { xs, .. } => xs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor; zeros when no gradient reached the node.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match self.get(v) {
            Some(g) => Tensor::new(shape.clone(), g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

/// Single-writer recording of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    bind_order: Vec<(ParamId, Var)>,
    no_grad: bool,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Maps flat output indices to flat operand indices under broadcasting.
enum Broadcast {
    Same,
    /// The operand covers a contiguous block of output axes: `(i / inner) % len`.
    Block {
        inner: usize,
        len: usize,
    },
    Table(Vec<usize>),
}

impl Broadcast {
    fn new(shape: &[usize], out: &[usize]) -> Self {
        if shape == out {
            return Broadcast::Same;
        }
        let pad = out.len() - shape.len();
        let full: Vec<usize> = std::iter::repeat_n(1, pad).chain(shape.iter().copied()).collect();
        let kept: Vec<usize> = (0..out.len()).filter(|&d| full[d] != 1 || out[d] == 1).collect();
        let first = kept.iter().copied().find(|&d| full[d] == out[d] && out[d] != 1);
        let last = kept.iter().copied().rev().find(|&d| full[d] == out[d] && out[d] != 1);
        match (first, last) {
            (Some(a), Some(b)) if (a..=b).all(|d| full[d] == out[d]) && (0..out.len()).all(|d| (a..=b).contains(&d) || full[d] == 1) => {
                Broadcast::Block { inner: out[b + 1..].iter().product(), len: out[a..=b].iter().product() }
            }
            _ if full.iter().all(|&d| d == 1) => Broadcast::Block { inner: 1, len: 1 },
            _ => Broadcast::Table(broadcast_offsets(out, &broadcast_strides(shape, out))),
        }
    }

    #[inline]
    fn at(&self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Block { inner, len } => (i / inner) % len,
            Broadcast::Table(t) => t[i],
        }
    }
}

// c[m,n] += a[m,k] * b[k,n]
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

// out[m,k] += g[m,n] * b[k,n]^T
fn gemm_nt(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            out[i * k + p] += acc;
        }
    }
}

// out[k,n] += a[m,k]^T * g[m,n]
fn gemm_tn(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (ov, gv) in orow.iter_mut().zip(grow) {
                *ov += av * gv;
            }
        }
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

fn gelu(x: f64) -> (f64, f64) {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (y, dy)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Tape whose parameters do not require gradients; no backward data is kept.
    pub fn inference() -> Self {
        Tape { no_grad: true, ..Tape::default() }
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn bindings(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bind_order.iter().copied()
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{what} produced a non-finite value")));
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that receives gradients.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric("leaf holds a non-finite value".into()));
        }
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: !self.no_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter, once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let value = store.value(id).clone();
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: !self.no_grad });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        self.bind_order.push((id, v));
        v
    }

    /// Same values, zero gradient contribution to `x`.
    pub fn stopgrad(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    // ---- elementwise -------------------------------------------------------

    fn unary(&mut self, x: Var, what: &str, f: impl Fn(f64) -> (f64, f64)) -> Result<Var> {
        let need = self.requires_grad(x);
        let src = self.value(x);
        let mut out = Vec::with_capacity(src.len());
        let mut deriv = Vec::with_capacity(if need { src.len() } else { 0 });
        for &v in src.data() {
            let (y, d) = f(v);
            out.push(y);
            if need {
                deriv.push(d);
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        self.push(value, Op::Unary { x, deriv }, what)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, "scale", |v| (c * v, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, "add_scalar", |v| (v + c, 1.0))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "exp", |v| {
            let e = v.exp();
            (e, e)
        })
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "log", |v| (v.ln(), 1.0 / v))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "tanh", |v| {
            let t = v.tanh();
            (t, 1.0 - t * t)
        })
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "gelu", gelu)
    }

    /// Square root; the derivative at exactly zero is taken as zero.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "sqrt", |v| {
            let s = v.max(0.0).sqrt();
            (s, if s > 0.0 { 0.5 / s } else { 0.0 })
        })
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "square", |v| (v * v, 2.0 * v))
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "cos", |v| (v.cos(), -v.sin()))
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "sin", |v| (v.sin(), v.cos()))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "abs", |v| {
            (
                v.abs(),
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                },
            )
        })
    }

    /// `max(x, 0)`.
    pub fn clamp_min_zero(&mut self, x: Var) -> Result<Var> {
        self.unary(x, "clamp", |v| if v > 0.0 { (v, 1.0) } else { (0.0, 0.0) })
    }

    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let f: fn(f64, f64) -> f64 = match kind {
            BinKind::Add => |x, y| x + y,
            BinKind::Sub => |x, y| x - y,
            BinKind::Mul => |x, y| x * y,
            BinKind::Div => |x, y| x / y,
        };
        let (va, vb) = (self.value(a), self.value(b));
        let value = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(va.shape().to_vec(), data)?
        } else {
            let out = broadcast_shape(va.shape(), vb.shape())?;
            let n: usize = out.iter().product();
            let (ia, ib) = (Broadcast::new(va.shape(), &out), Broadcast::new(vb.shape(), &out));
            let (da, db) = (va.data(), vb.data());
            let data = (0..n).map(|i| f(da[ia.at(i)], db[ib.at(i)])).collect();
            Tensor::new(out, data)?
        };
        self.push(value, Op::Binary { kind, a, b }, "binary")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Div, a, b)
    }

    /// `sqrt(a^2 + b^2)` for same-shape operands.
    pub fn hypot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(format!("hypot of {:?} and {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x.hypot(*y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(value, Op::Hypot { a, b }, "hypot")
    }

    // ---- linear algebra and layout -----------------------------------------

    /// Batched matrix product over the last two axes. Either operand may be a
    /// plain matrix, in which case it is shared across the other's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::dim(format!("matmul needs matrices, got {sa:?} and {sb:?}")));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(Error::dim(format!("matmul inner extents differ: {sa:?} x {sb:?}")));
        }
        let a_shared = sa.len() == 2 && sb.len() > 2;
        let b_shared = sb.len() == 2;
        let batch_dims: Vec<usize> = if a_shared { sb[..sb.len() - 2].to_vec() } else { sa[..sa.len() - 2].to_vec() };
        if !a_shared && !b_shared && sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(Error::dim(format!("matmul batch extents differ: {sa:?} x {sb:?}")));
        }
        let batch: usize = batch_dims.iter().product();
        let mut out = vec![0.0; batch * m * n];
        {
            let (da, db) = (self.value(a).data(), self.value(b).data());
            for bi in 0..batch {
                let ao = if a_shared { 0 } else { bi * m * k };
                let bo = if b_shared { 0 } else { bi * k * n };
                gemm_nn(&da[ao..ao + m * k], &db[bo..bo + k * n], &mut out[bi * m * n..(bi + 1) * m * n], m, k, n);
            }
        }
        let mut shape = batch_dims;
        shape.push(m);
        shape.push(n);
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::MatMul { a, b, batch, m, k, n, a_shared, b_shared }, "matmul")
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::dim(format!("invalid permutation {axes:?} for {shape:?}")));
        }
        let st = strides(&shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| st[a]).collect();
        let src_offsets = broadcast_offsets(&out_shape, &src_strides);
        let src = self.value(x).data();
        let data = src_offsets.iter().map(|&o| src[o]).collect();
        let value = Tensor::new(out_shape, data)?;
        self.push(value, Op::Permute { x, src_offsets }, "permute")
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let nd = self.shape(x).len();
        if nd < 2 {
            return Err(Error::dim("transpose needs at least two axes"));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 1, nd - 2);
        self.permute(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push(value, Op::Reshape { x }, "reshape")
    }

    // ---- reductions ----------------------------------------------------------

    fn check_axis(&self, x: Var, axis: usize) -> Result<()> {
        if axis >= self.shape(x).len() {
            return Err(Error::dim(format!("axis {axis} out of range for {:?}", self.shape(x))));
        }
        Ok(())
    }

    fn reduce(&mut self, kind: Reduce, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        if n == 0 {
            return Err(Error::dim("reduction over an empty axis"));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| src[(o * n + j) * inner + i];
                let sum: f64 = (0..n).map(at).sum();
                out[o * inner + i] = match kind {
                    Reduce::Sum => sum,
                    Reduce::Mean => sum / n as f64,
                    Reduce::Variance => {
                        let mean = sum / n as f64;
                        (0..n).map(|j| (at(j) - mean).powi(2)).sum::<f64>() / n as f64
                    }
                };
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::Reduce { kind, x, axis }, "reduce")
    }

    /// Sum over `axis`, keeping it with extent 1.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Sum, x, axis)
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Mean, x, axis)
    }

    /// Population variance (divides by N) over `axis`.
    pub fn variance(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduce::Variance, x, axis)
    }

    /// Sum of all elements as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        let flat = self.reshape(x, &[n])?;
        let s = self.sum(flat, 0)?;
        self.reshape(s, &[])
    }

    /// Maximum over `axis`; the gradient flows to the first maximal element.
    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        if n == 0 {
            return Err(Error::dim("max over an empty axis"));
        }
        let src = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = vec![0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = (o * n) * inner + i;
                for j in 1..n {
                    let idx = (o * n + j) * inner + i;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out[o * inner + i] = src[best];
                argmax[o * inner + i] = best;
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::Max { x, argmax }, "max")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (src[idx(j)] - m).exp();
                    out[idx(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    out[idx(j)] /= z;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::Softmax { x, axis }, "softmax")
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| src[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..n).map(|j| (src[idx(j)] - m).exp()).sum::<f64>().ln();
                for j in 0..n {
                    out[idx(j)] = src[idx(j)] - lse;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::LogSoftmax { x, axis }, "log_softmax")
    }

    /// Normalization to zero mean and unit population variance over `axis`, without affine terms.
    pub fn layer_norm(&mut self, x: Var, axis: usize, eps: f64) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let mean = (0..n).map(|j| src[idx(j)]).sum::<f64>() / n as f64;
                let var = (0..n).map(|j| (src[idx(j)] - mean).powi(2)).sum::<f64>() / n as f64;
                let r = 1.0 / (var + eps).sqrt();
                inv_std[o * inner + i] = r;
                for j in 0..n {
                    out[idx(j)] = (src[idx(j)] - mean) * r;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::LayerNorm { x, axis, inv_std }, "layer_norm")
    }

    // ---- structural ----------------------------------------------------------

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| Error::dim("concat of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(Error::dim(format!("concat shapes {base:?} and {s:?} differ off axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for &x in xs {
            let n = self.shape(x)[axis];
            let src = self.value(x).data();
            for o in 0..outer {
                let dst = (o * total + offset) * inner;
                out[dst..dst + n * inner].copy_from_slice(&src[o * n * inner..(o + 1) * n * inner]);
            }
            offset += n;
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::Concat { xs: xs.to_vec(), axis }, "concat")
    }

    /// Contiguous slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        if start + len > shape[axis] {
            return Err(Error::dim(format!("narrow [{start}, {}) exceeds extent {}", start + len, shape[axis])));
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * n + start) * inner;
            out.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::Narrow { x, axis, start }, "narrow")
    }

    /// Gathers positions `indices` along `axis`; repeats are allowed.
    pub fn index_select(&mut self, x: Var, axis: usize, indices: &[usize]) -> Result<Var> {
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner) = axis_split(&shape, axis);
        if let Some(bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::dim(format!("index {bad} out of range for extent {n}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &j in indices {
                let from = (o * n + j) * inner;
                out.extend_from_slice(&src[from..from + inner]);
            }
        }
        let mut oshape = shape;
        oshape[axis] = indices.len();
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::IndexSelect { x, axis, indices: indices.to_vec() }, "index_select")
    }

    /// Sliding windows of `[B, T, C]` into `[B, T_out, kernel * C]` with zero padding.
    pub fn unfold(&mut self, x: Var, kernel: usize, stride: usize, pad_left: usize, t_out: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || kernel == 0 || stride == 0 {
            return Err(Error::dim(format!("unfold needs [B,T,C] and positive kernel/stride, got {shape:?}")));
        }
        let (b, t, c) = (shape[0], shape[1], shape[2]);
        let src = self.value(x).data();
        let mut out = vec![0.0; b * t_out * kernel * c];
        for bi in 0..b {
            for o in 0..t_out {
                for j in 0..kernel {
                    let pos = (o * stride + j) as isize - pad_left as isize;
                    if pos < 0 || pos as usize >= t {
                        continue;
                    }
                    let from = (bi * t + pos as usize) * c;
                    let to = ((bi * t_out + o) * kernel + j) * c;
                    out[to..to + c].copy_from_slice(&src[from..from + c]);
                }
            }
        }
        let value = Tensor::new(vec![b, t_out, kernel * c], out)?;
        self.push(value, Op::Unfold { x, kernel, stride, pad_left }, "unfold")
    }

    /// Per-segment correlation along the last axis with replicate padding.
    ///
    /// `x` is `[B, R, L]`; `w` is `[B, M, r]` or `[1, M, r]` holding one odd-length
    /// kernel per segment; `bounds` has `M + 1` ascending offsets from 0 to `L`.
    /// Samples never cross a segment border.
    pub fn segment_conv(&mut self, x: Var, w: Var, bounds: &[usize]) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 {
            return Err(Error::dim(format!("segment_conv needs rank-3 operands, got {sx:?} and {sw:?}")));
        }
        let (b, rows, l) = (sx[0], sx[1], sx[2]);
        let (bw, m, r) = (sw[0], sw[1], sw[2]);
        if (bw != 1 && bw != b) || bounds.len() != m + 1 || r % 2 == 0 {
            return Err(Error::dim(format!("segment_conv kernel {sw:?} incompatible with input {sx:?} and {} bounds", bounds.len())));
        }
        if bounds[0] != 0 || bounds[m] != l || bounds.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::dim(format!("segment bounds {bounds:?} do not tile length {l}")));
        }
        let half = (r / 2) as isize;
        let (xs, ws) = (self.value(x).data(), self.value(w).data());
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            let wb = if bw == 1 { 0 } else { bi };
            for seg in 0..m {
                let (lo, hi) = (bounds[seg] as isize, bounds[seg + 1] as isize);
                let kern = &ws[(wb * m + seg) * r..(wb * m + seg + 1) * r];
                for row in 0..rows {
                    let base = (bi * rows + row) * l;
                    for i in lo..hi {
                        let mut acc = 0.0;
                        for (j, &kv) in kern.iter().enumerate() {
                            let p = (i + j as isize - half).clamp(lo, hi - 1) as usize;
                            acc += kv * xs[base + p];
                        }
                        out[base + i as usize] = acc;
                    }
                }
            }
        }
        let value = Tensor::new(sx, out)?;
        self.push(value, Op::SegmentConv { x, w, bounds: bounds.to_vec() }, "segment_conv")
    }

    /// Unnormalized real FFT over the last axis: `[..., T]` to interleaved `[..., T/2+1, 2]`.
    pub fn rfft(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().ok_or_else(|| Error::dim("rfft of a scalar"))?;
        if n < 2 {
            return Err(Error::dim(format!("rfft needs length >= 2, got {n}")));
        }
        let out = fft::rfft_rows(self.value(x).data(), n);
        let mut oshape = shape;
        *oshape.last_mut().unwrap() = fft::rfft_bins(n);
        oshape.push(2);
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::Rfft { x, n }, "rfft")
    }

    /// Inverse real FFT of interleaved `[..., T/2+1, 2]` bins back to `[..., T]`.
    pub fn irfft(&mut self, z: Var, n: usize) -> Result<Var> {
        let shape = self.shape(z).to_vec();
        if shape.len() < 2 || shape[shape.len() - 1] != 2 || n < 2 || shape[shape.len() - 2] != fft::rfft_bins(n) {
            return Err(Error::dim(format!("irfft to length {n} cannot take bins {shape:?}")));
        }
        let out = fft::irfft_rows(self.value(z).data(), n);
        let mut oshape = shape[..shape.len() - 1].to_vec();
        *oshape.last_mut().unwrap() = n;
        let value = Tensor::new(oshape, out)?;
        self.push(value, Op::Irfft { z, n }, "irfft")
    }

    // ---- backward ------------------------------------------------------------

    /// Gradients of a scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::dim(format!("backward root must be scalar, got {:?}", self.shape(root))));
        }
        self.backward_with(root, Tensor::full(self.shape(root), 1.0))
    }

    /// Vector-Jacobian product seeded with `seed` at `root`.
    pub fn backward_with(&self, root: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(root) {
            return Err(Error::dim("backward seed shape differs from root"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed.into_data());
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let mut shapes: Vec<Vec<usize>> = self.nodes[..=root.0].iter().map(|n| n.value.shape().to_vec()).collect();
        grads.resize(self.nodes.len(), None);
        shapes.extend(self.nodes[root.0 + 1..].iter().map(|n| n.value.shape().to_vec()));
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite gradient at node {i}")));
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Unary { x, deriv } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((d, gv), dv) in gx.iter_mut().zip(g).zip(deriv) {
                        *d += gv * dv;
                    }
                }
            }
            Op::Binary { kind, a, b } => self.binary_backward(*kind, *a, *b, node.value.shape(), g, grads),
            Op::Hypot { a, b } => {
                let out = node.value.data();
                for (operand, src) in [(*a, self.value(*a).data()), (*b, self.value(*b).data())] {
                    if let Some(gx) = self.slot(grads, operand) {
                        for i in 0..out.len() {
                            if out[i] > 0.0 {
                                gx[i] += g[i] * src[i] / out[i];
                            }
                        }
                    }
                }
            }
            Op::MatMul { a, b, batch, m, k, n, a_shared, b_shared } => {
                let (m, k, n) = (*m, *k, *n);
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.slot(grads, *a) {
                    for bi in 0..*batch {
                        let ao = if *a_shared { 0 } else { bi * m * k };
                        let bo = if *b_shared { 0 } else { bi * k * n };
                        gemm_nt(&g[bi * m * n..(bi + 1) * m * n], &db[bo..bo + k * n], &mut ga[ao..ao + m * k], m, k, n);
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for bi in 0..*batch {
                        let ao = if *a_shared { 0 } else { bi * m * k };
                        let bo = if *b_shared { 0 } else { bi * k * n };
                        gemm_tn(&da[ao..ao + m * k], &g[bi * m * n..(bi + 1) * m * n], &mut gb[bo..bo + k * n], m, k, n);
                    }
                }
            }
            Op::Permute { x, src_offsets } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (gv, &o) in g.iter().zip(src_offsets) {
                        gx[o] += gv;
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::Reduce { kind, x, axis } => {
                let shape = self.shape(*x).to_vec();
                let (outer, n, inner) = axis_split(&shape, *axis);
                let src = self.value(*x).data();
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let gv = g[o * inner + i];
                            let mean = match kind {
                                Reduce::Variance => Some((0..n).map(|j| src[(o * n + j) * inner + i]).sum::<f64>() / n as f64),
                                _ => None,
                            };
                            for j in 0..n {
                                let idx = (o * n + j) * inner + i;
                                gx[idx] += match kind {
                                    Reduce::Sum => gv,
                                    Reduce::Mean => gv / n as f64,
                                    Reduce::Variance => gv * 2.0 * (src[idx] - mean.unwrap()) / n as f64,
                                };
                            }
                        }
                    }
                }
            }
            Op::Max { x, argmax } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for (gv, &idx) in g.iter().zip(argmax) {
                        gx[idx] += gv;
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * n + j) * inner + i;
                            let dot: f64 = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            for j in 0..n {
                                gx[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax { x, axis } => {
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * n + j) * inner + i;
                            let total: f64 = (0..n).map(|j| g[idx(j)]).sum();
                            for j in 0..n {
                                gx[idx(j)] += g[idx(j)] - y[idx(j)].exp() * total;
                            }
                        }
                    }
                }
            }
            Op::LayerNorm { x, axis, inv_std } => {
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * n + j) * inner + i;
                            let gm: f64 = (0..n).map(|j| g[idx(j)]).sum::<f64>() / n as f64;
                            let gy: f64 = (0..n).map(|j| g[idx(j)] * y[idx(j)]).sum::<f64>() / n as f64;
                            let r = inv_std[o * inner + i];
                            for j in 0..n {
                                gx[idx(j)] += r * (g[idx(j)] - gm - y[idx(j)] * gy);
                            }
                        }
                    }
                }
            }
            Op::Concat { xs, axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = axis_split(shape, *axis);
                let mut offset = 0;
                for &x in xs {
                    let n = self.shape(x)[*axis];
                    if let Some(gx) = self.slot(grads, x) {
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            add_into(&mut gx[o * n * inner..(o + 1) * n * inner], &g[from..from + n * inner]);
                        }
                    }
                    offset += n;
                }
            }
            Op::Narrow { x, axis, start } => {
                let (outer, n, inner) = axis_split(self.shape(*x), *axis);
                let len = node.value.shape()[*axis];
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        let to = (o * n + start) * inner;
                        add_into(&mut gx[to..to + len * inner], &g[o * len * inner..(o + 1) * len * inner]);
                    }
                }
            }
            Op::IndexSelect { x, axis, indices } => {
                let (outer, n, inner) = axis_split(self.shape(*x), *axis);
                let len = indices.len();
                if let Some(gx) = self.slot(grads, *x) {
                    for o in 0..outer {
                        for (jj, &j) in indices.iter().enumerate() {
                            let to = (o * n + j) * inner;
                            let from = (o * len + jj) * inner;
                            add_into(&mut gx[to..to + inner], &g[from..from + inner]);
                        }
                    }
                }
            }
            Op::Unfold { x, kernel, stride, pad_left } => {
                let s = self.shape(*x);
                let (b, t, c) = (s[0], s[1], s[2]);
                let t_out = node.value.shape()[1];
                if let Some(gx) = self.slot(grads, *x) {
                    for bi in 0..b {
                        for o in 0..t_out {
                            for j in 0..*kernel {
                                let pos = (o * stride + j) as isize - *pad_left as isize;
                                if pos < 0 || pos as usize >= t {
                                    continue;
                                }
                                let to = (bi * t + pos as usize) * c;
                                let from = ((bi * t_out + o) * kernel + j) * c;
                                add_into(&mut gx[to..to + c], &g[from..from + c]);
                            }
                        }
                    }
                }
            }
            Op::SegmentConv { x, w, bounds } => {
                let sx = self.shape(*x);
                let (b, rows, l) = (sx[0], sx[1], sx[2]);
                let sw = self.shape(*w);
                let (bw, m, r) = (sw[0], sw[1], sw[2]);
                let half = (r / 2) as isize;
                let (xs, ws) = (self.value(*x).data(), self.value(*w).data());
                let need_x = self.nodes[x.0].requires_grad;
                let need_w = self.nodes[w.0].requires_grad;
                let mut gx_local = if need_x { vec![0.0; xs.len()] } else { Vec::new() };
                let mut gw_local = if need_w { vec![0.0; ws.len()] } else { Vec::new() };
                for bi in 0..b {
                    let wb = if bw == 1 { 0 } else { bi };
                    for seg in 0..m {
                        let (lo, hi) = (bounds[seg] as isize, bounds[seg + 1] as isize);
                        let koff = (wb * m + seg) * r;
                        for row in 0..rows {
                            let base = (bi * rows + row) * l;
                            for i in lo..hi {
                                let gv = g[base + i as usize];
                                if gv == 0.0 {
                                    continue;
                                }
                                for j in 0..r {
                                    let p = (i + j as isize - half).clamp(lo, hi - 1) as usize;
                                    if need_x {
                                        gx_local[base + p] += gv * ws[koff + j];
                                    }
                                    if need_w {
                                        gw_local[koff + j] += gv * xs[base + p];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, &gx_local);
                }
                if let Some(gw) = self.slot(grads, *w) {
                    add_into(gw, &gw_local);
                }
            }
            Op::Rfft { x, n } => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, &fft::rfft_adjoint_rows(g, *n));
                }
            }
            Op::Irfft { z, n } => {
                if let Some(gz) = self.slot(grads, *z) {
                    add_into(gz, &fft::irfft_adjoint_rows(g, *n));
                }
            }
        }
    }

    fn binary_backward(&self, kind: BinKind, a: Var, b: Var, out: &[usize], g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (va, vb) = (self.value(a), self.value(b));
        let (oa, ob) = (Broadcast::new(va.shape(), out), Broadcast::new(vb.shape(), out));
        let ia = |i: usize| oa.at(i);
        let ib = |i: usize| ob.at(i);
        let (da, db) = (va.data(), vb.data());
        if let Some(ga) = self.slot(grads, a) {
            for (i, gv) in g.iter().enumerate() {
                ga[ia(i)] += match kind {
                    BinKind::Add | BinKind::Sub => *gv,
                    BinKind::Mul => gv * db[ib(i)],
                    BinKind::Div => gv / db[ib(i)],
                };
            }
        }
        if let Some(gb) = self.slot(grads, b) {
            for (i, gv) in g.iter().enumerate() {
                gb[ib(i)] += match kind {
                    BinKind::Add => *gv,
                    BinKind::Sub => -gv,
                    BinKind::Mul => gv * da[ia(i)],
                    BinKind::Div => -gv * da[ia(i)] / (db[ib(i)] * db[ib(i)]),
                };
            }
        }
    }

    // ---- composites ------------------------------------------------------

    /// Same-length correlation of each row of `[..., L]` with one odd kernel, replicate padded.
    pub fn conv1d_same(&mut self, signal: Var, kernel: Var) -> Result<Var> {
        let shape = self.shape(signal).to_vec();
        let l = *shape.last().ok_or_else(|| Error::dim("conv1d of a scalar"))?;
        let rows = shape.iter().product::<usize>() / l.max(1);
        let r = self.value(kernel).len();
        let x = self.reshape(signal, &[1, rows, l])?;
        let w = self.reshape(kernel, &[1, 1, r])?;
        let y = self.segment_conv(x, w, &[0, l])?;
        self.reshape(y, &shape)
    }

    /// Mean cross-entropy of `[B, K]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::dim(format!("cross_entropy logits {shape:?} vs {} labels", labels.len())));
        }
        let (b, k) = (shape[0], shape[1]);
        if let Some(bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::dim(format!("label {bad} out of range for {k} classes")));
        }
        let onehot = Tensor::from_fn(&[b, k], |i| if labels[i / k] == i % k { -1.0 / b as f64 } else { 0.0 });
        let onehot = self.constant(onehot);
        let lp = self.log_softmax(logits, 1)?;
        let picked = self.mul(lp, onehot)?;
        self.sum_all(picked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn broadcast_fast_paths_match_the_offset_table() {
        let out = [2, 3, 4];
        for shape in [vec![4], vec![3, 1], vec![2, 1, 1], vec![2, 3, 1], vec![1, 3, 4], vec![2, 1, 4], vec![1], vec![3, 4]] {
            let table = broadcast_offsets(&out, &broadcast_strides(&shape, &out));
            let b = Broadcast::new(&shape, &out);
            assert!((0..24).all(|i| b.at(i) == table[i]), "{shape:?}");
        }
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0)).unwrap();
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn softmax_of_equal_logits() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        let y = t.softmax(x, 0).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_of_constant_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        let y = t.layer_norm(x, 0, 1e-5).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn replicate_conv_by_hand() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let k = t.constant(Tensor::from_vec(vec![1.0 / 3.0; 3]));
        let y = t.conv1d_same(x, k).unwrap();
        assert!(close(t.value(y).data(), &[4.0 / 3.0, 2.0, 8.0 / 3.0], 1e-12));
    }

    #[test]
    fn segment_conv_stays_inside_segments() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 1, 4], vec![1.0, 2.0, 10.0, 20.0]).unwrap()).unwrap();
        let w = t.constant(Tensor::new(vec![1, 2, 3], vec![1.0 / 3.0; 6]).unwrap());
        let y = t.segment_conv(x, w, &[0, 2, 4]).unwrap();
        let expect = [4.0 / 3.0, 5.0 / 3.0, 40.0 / 3.0, 50.0 / 3.0];
        assert!(close(t.value(y).data(), &expect, 1e-12));
    }

    #[test]
    fn stopgrad_blocks() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let s = t.stopgrad(x);
        let y = t.mul(s, s).unwrap();
        let z = t.sum_all(y).unwrap();
        let g = t.backward(z).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_shared_rhs() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let b = t.leaf(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap()).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[3.0, 7.0]);
        let s = t.sum_all(c).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(b).unwrap(), &[4.0, 6.0]);
        assert_eq!(g.get(a).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3])).unwrap();
        let b = t.leaf(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(t.matmul(a, b), Err(Error::Dimension(_))));
        let c = t.leaf(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(t.add(a, c), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_vec(vec![0.0])).unwrap();
        assert!(matches!(t.log(x), Err(Error::Numeric(_))));
    }

    #[test]
    fn unfold_pads_left_only() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let u = t.unfold(x, 3, 2, 1, 2).unwrap();
        assert_eq!(t.value(u).data(), &[0.0, 1.0, 2.0, 2.0, 3.0, 4.0]);
    }
}
