//! Elementwise, reduction and shape primitives.

use std::str::FromStr;

use rand::Rng as _;

use super::tape::{Backward, GradCtx, Var};
use super::tensor::numel;
use crate::error::{Error, Result};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// broadcasting binary ops

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n {
            a[i + a.len() - n]
        } else {
            1
        };
        let db = if i + b.len() >= n {
            b[i + b.len() - n]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every element of `out_shape`, the flat index of the broadcast source.
fn broadcast_map(in_shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let n = out_shape.len();
    let pad = n - in_shape.len();
    let mut strides = vec![0usize; n];
    let mut s = 1;
    for i in (0..in_shape.len()).rev() {
        strides[i + pad] = if in_shape[i] == 1 { 0 } else { s };
        s *= in_shape[i];
    }
    let total = numel(out_shape);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut off = 0usize;
    for _ in 0..total {
        map.push(off);
        for d in (0..n).rev() {
            idx[d] += 1;
            off += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct BinaryOp {
    kind: BinaryKind,
    a: usize,
    b: usize,
    map_a: Option<Vec<usize>>,
    map_b: Option<Vec<usize>>,
}

impl Backward for BinaryOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let at = |map: &Option<Vec<usize>>, i: usize| map.as_ref().map_or(i, |m| m[i]);
        if ctx.wants(self.a) {
            match self.kind {
                BinaryKind::Add | BinaryKind::Sub => {
                    let ga = ctx.grad(self.a);
                    for (i, gi) in g.iter().enumerate() {
                        ga[at(&self.map_a, i)] += gi;
                    }
                }
                BinaryKind::Mul => {
                    let bv = ctx.value(self.b);
                    let ga = ctx.grad(self.a);
                    for (i, gi) in g.iter().enumerate() {
                        ga[at(&self.map_a, i)] += gi * bv[at(&self.map_b, i)];
                    }
                }
            }
        }
        if ctx.wants(self.b) {
            match self.kind {
                BinaryKind::Add => {
                    let gb = ctx.grad(self.b);
                    for (i, gi) in g.iter().enumerate() {
                        gb[at(&self.map_b, i)] += gi;
                    }
                }
                BinaryKind::Sub => {
                    let gb = ctx.grad(self.b);
                    for (i, gi) in g.iter().enumerate() {
                        gb[at(&self.map_b, i)] -= gi;
                    }
                }
                BinaryKind::Mul => {
                    let av = ctx.value(self.a);
                    let gb = ctx.grad(self.b);
                    for (i, gi) in g.iter().enumerate() {
                        gb[at(&self.map_b, i)] += gi * av[at(&self.map_a, i)];
                    }
                }
            }
        }
    }
}

fn binary<'t>(kind: BinaryKind, a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (sa, sb) = (a.shape(), b.shape());
    let out_shape = broadcast_shape(&sa, &sb).ok_or_else(|| {
        Error::shape(
            match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Mul => "mul",
            },
            &sa,
            &sb,
        )
    })?;
    let map_a = (sa != out_shape).then(|| broadcast_map(&sa, &out_shape));
    let map_b = (sb != out_shape).then(|| broadcast_map(&sb, &out_shape));
    let n = numel(&out_shape);
    let value = a.with_value(|av| {
        b.with_value(|bv| {
            let f = |x: f64, y: f64| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
            };
            match (&map_a, &map_b) {
                (None, None) => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
                _ => (0..n)
                    .map(|i| {
                        let ia = map_a.as_ref().map_or(i, |m| m[i]);
                        let ib = map_b.as_ref().map_or(i, |m| m[i]);
                        f(av[ia], bv[ib])
                    })
                    .collect::<Vec<f64>>(),
            }
        })
    });
    let rg = a.requires_grad() || b.requires_grad();
    let op = BinaryOp {
        kind,
        a: a.id(),
        b: b.id(),
        map_a,
        map_b,
    };
    Ok(a.tape().push(out_shape, value, rg, op))
}

/// Elementwise sum with numpy-style broadcasting.
pub fn add<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    binary(BinaryKind::Add, a, b)
}

pub fn sub<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    binary(BinaryKind::Sub, a, b)
}

/// Elementwise product with numpy-style broadcasting.
pub fn mul<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    binary(BinaryKind::Mul, a, b)
}

// ---------------------------------------------------------------------------
// affine scalar maps

struct ScaleOp {
    a: usize,
    factor: f64,
}

impl Backward for ScaleOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if ctx.wants(self.a) {
            for (d, gi) in ctx.grad(self.a).iter_mut().zip(g) {
                *d += gi * self.factor;
            }
        }
    }
}

/// `factor * a + offset`, with constant scalars.
pub fn affine(a: Var<'_>, factor: f64, offset: f64) -> Var<'_> {
    let value = a.with_value(|v| v.iter().map(|x| factor * x + offset).collect());
    a.tape().push(
        a.shape(),
        value,
        a.requires_grad(),
        ScaleOp { a: a.id(), factor },
    )
}

pub fn scale(a: Var<'_>, factor: f64) -> Var<'_> {
    affine(a, factor, 0.0)
}

// ---------------------------------------------------------------------------
// unary activations

/// Elementwise nonlinearity selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Silu,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Neg,
}

impl FromStr for UnaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "silu" => Self::Silu,
            "relu" => Self::Relu,
            "sigmoid" => Self::Sigmoid,
            "softplus" => Self::Softplus,
            "exp" => Self::Exp,
            "neg" => Self::Neg,
            other => return Err(Error::Config(format!("unknown activation `{other}`"))),
        })
    }
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl UnaryKind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::Silu => x * sigmoid(x),
            Self::Relu => x.max(0.0),
            Self::Sigmoid => sigmoid(x),
            Self::Softplus => softplus(x),
            Self::Exp => x.exp(),
            Self::Neg => -x,
        }
    }

    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Self::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => y * (1.0 - y),
            Self::Softplus => sigmoid(x),
            Self::Exp => y,
            Self::Neg => -1.0,
        }
    }
}

struct UnaryOp {
    a: usize,
    kind: UnaryKind,
}

impl Backward for UnaryOp {
    fn backward(&self, g: &[f64], out: &[f64], ctx: &mut GradCtx<'_>) {
        if !ctx.wants(self.a) {
            return;
        }
        let x = ctx.value(self.a);
        let ga = ctx.grad(self.a);
        for i in 0..g.len() {
            ga[i] += g[i] * self.kind.derivative(x[i], out[i]);
        }
    }
}

pub fn apply_unary(a: Var<'_>, kind: UnaryKind) -> Var<'_> {
    let value = a.with_value(|v| v.iter().map(|&x| kind.eval(x)).collect());
    a.tape().push(
        a.shape(),
        value,
        a.requires_grad(),
        UnaryOp { a: a.id(), kind },
    )
}

pub fn silu(a: Var<'_>) -> Var<'_> {
    apply_unary(a, UnaryKind::Silu)
}

pub fn relu(a: Var<'_>) -> Var<'_> {
    apply_unary(a, UnaryKind::Relu)
}

// ---------------------------------------------------------------------------
// reductions

struct SumOp {
    a: usize,
}

impl Backward for SumOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if ctx.wants(self.a) {
            for d in ctx.grad(self.a) {
                *d += g[0];
            }
        }
    }
}

/// Sum of all elements, as a scalar.
pub fn sum(a: Var<'_>) -> Var<'_> {
    let s = a.with_value(|v| v.iter().sum());
    a.tape()
        .push(Vec::new(), vec![s], a.requires_grad(), SumOp { a: a.id() })
}

struct SoftmaxOp {
    a: usize,
    d: usize,
}

impl Backward for SoftmaxOp {
    fn backward(&self, g: &[f64], y: &[f64], ctx: &mut GradCtx<'_>) {
        if !ctx.wants(self.a) {
            return;
        }
        let ga = ctx.grad(self.a);
        for ((gr, yr), dr) in g
            .chunks(self.d)
            .zip(y.chunks(self.d))
            .zip(ga.chunks_mut(self.d))
        {
            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
            for j in 0..self.d {
                dr[j] += yr[j] * (gr[j] - dot);
            }
        }
    }
}

/// Softmax over the last axis.
pub fn softmax(a: Var<'_>) -> Var<'_> {
    let shape = a.shape();
    let d = *shape.last().unwrap_or(&1);
    let value = a.with_value(|v| {
        let mut out = Vec::with_capacity(v.len());
        for row in v.chunks(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut z = 0.0;
            for &x in row {
                let e = (x - m).exp();
                z += e;
                out.push(e);
            }
            for e in &mut out[start..] {
                *e /= z;
            }
        }
        out
    });
    a.tape()
        .push(shape, value, a.requires_grad(), SoftmaxOp { a: a.id(), d })
}

// ---------------------------------------------------------------------------
// dropout

struct MaskOp {
    a: usize,
    mask: Vec<f64>,
}

impl Backward for MaskOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if ctx.wants(self.a) {
            let ga = ctx.grad(self.a);
            for i in 0..g.len() {
                ga[i] += g[i] * self.mask[i];
            }
        }
    }
}

/// Inverted dropout. Evaluation mode and `p == 0` return `a` itself.
pub fn dropout<'t>(a: Var<'t>, p: f64, training: bool, rng: &mut Rng) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok(a);
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..a.numel())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    let value = a.with_value(|v| v.iter().zip(&mask).map(|(x, m)| x * m).collect());
    Ok(a.tape().push(
        a.shape(),
        value,
        a.requires_grad(),
        MaskOp { a: a.id(), mask },
    ))
}

// ---------------------------------------------------------------------------
// shape ops

struct CopyOp {
    a: usize,
}

impl Backward for CopyOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        ctx.accumulate(self.a, g);
    }
}

pub fn reshape<'t>(a: Var<'t>, shape: &[usize]) -> Result<Var<'t>> {
    if numel(shape) != a.numel() {
        return Err(Error::shape("reshape", &a.shape(), shape));
    }
    let value = a.with_value(|v| v.to_vec());
    Ok(a.tape().push(
        shape.to_vec(),
        value,
        a.requires_grad(),
        CopyOp { a: a.id() },
    ))
}

struct GatherOp {
    a: usize,
    /// `src[i]` is the input index feeding output element `i`.
    src: Vec<usize>,
}

impl Backward for GatherOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if ctx.wants(self.a) {
            let ga = ctx.grad(self.a);
            for (i, &s) in self.src.iter().enumerate() {
                ga[s] += g[i];
            }
        }
    }
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Reorders axes: output axis `i` is input axis `axes[i]`.
pub fn permute<'t>(a: Var<'t>, axes: &[usize]) -> Result<Var<'t>> {
    let shape = a.shape();
    let mut seen = vec![false; shape.len()];
    if axes.len() != shape.len()
        || axes
            .iter()
            .any(|&ax| ax >= shape.len() || std::mem::replace(&mut seen[ax], true))
    {
        return Err(Error::shape("permute", &shape, axes));
    }
    let in_strides = strides_of(&shape);
    let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
    let perm_strides: Vec<usize> = axes.iter().map(|&ax| in_strides[ax]).collect();
    let total = numel(&out_shape);
    let mut src = Vec::with_capacity(total);
    let mut idx = vec![0usize; out_shape.len()];
    let mut off = 0usize;
    for _ in 0..total {
        src.push(off);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            off += perm_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= perm_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    Ok(gather(a, out_shape, src))
}

fn gather(a: Var<'_>, out_shape: Vec<usize>, src: Vec<usize>) -> Var<'_> {
    let value = a.with_value(|v| src.iter().map(|&s| v[s]).collect());
    a.tape().push(
        out_shape,
        value,
        a.requires_grad(),
        GatherOp { a: a.id(), src },
    )
}

/// Swaps the last two axes.
pub fn transpose_last<'t>(a: Var<'t>) -> Result<Var<'t>> {
    let n = a.shape().len();
    if n < 2 {
        return Err(Error::shape("transpose", &a.shape(), &[]));
    }
    let mut axes: Vec<usize> = (0..n).collect();
    axes.swap(n - 1, n - 2);
    permute(a, &axes)
}

/// Elements `start..start + len` along `axis`.
pub fn narrow<'t>(a: Var<'t>, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
    let shape = a.shape();
    if axis >= shape.len() || start + len > shape[axis] {
        return Err(Error::shape("narrow", &shape, &[axis, start, len]));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.clone();
    out_shape[axis] = len;
    let mut src = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        for t in start..start + len {
            let base = (o * shape[axis] + t) * inner;
            src.extend(base..base + inner);
        }
    }
    Ok(gather(a, out_shape, src))
}

struct PadOp {
    a: usize,
    outer: usize,
    len: usize,
    extra: usize,
    inner: usize,
}

impl Backward for PadOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if !ctx.wants(self.a) {
            return;
        }
        let ga = ctx.grad(self.a);
        let block = self.len * self.inner;
        let padded = (self.len + self.extra) * self.inner;
        for o in 0..self.outer {
            for j in 0..block {
                ga[o * block + j] += g[o * padded + j];
            }
        }
    }
}

/// Appends `extra` zeros along `axis`.
pub fn pad_tail<'t>(a: Var<'t>, axis: usize, extra: usize) -> Result<Var<'t>> {
    let shape = a.shape();
    if axis >= shape.len() {
        return Err(Error::shape("pad", &shape, &[axis]));
    }
    if extra == 0 {
        return Ok(a);
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let mut out_shape = shape.clone();
    out_shape[axis] = len + extra;
    let value = a.with_value(|v| {
        let mut out = Vec::with_capacity(numel(&out_shape));
        for block in v.chunks(len * inner) {
            out.extend_from_slice(block);
            out.extend(std::iter::repeat_n(0.0, extra * inner));
        }
        out
    });
    let op = PadOp {
        a: a.id(),
        outer,
        len,
        extra,
        inner,
    };
    Ok(a.tape().push(out_shape, value, a.requires_grad(), op))
}
