//! Matrix products.

use super::tape::{Backward, GradCtx, Var};
use crate::error::{Error, Result};

/// `c[m,n] += a[m,k] · b[k,n]`
pub(crate) fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// Dot product with eight independent partial sums, so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `c[m,k] += a[m,n] · b[k,n]ᵀ`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] += dot(arow, brow);
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · b[m,n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

struct MatmulOp {
    a: usize,
    b: usize,
    batch: usize,
    a_batched: bool,
    b_batched: bool,
    m: usize,
    k: usize,
    n: usize,
}

impl Backward for MatmulOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let (m, k, n) = (self.m, self.k, self.n);
        let av = ctx.value(self.a);
        let bv = ctx.value(self.b);
        let a_off = |i: usize| if self.a_batched { i * m * k } else { 0 };
        let b_off = |i: usize| if self.b_batched { i * k * n } else { 0 };
        if ctx.wants(self.a) {
            let ga = ctx.grad(self.a);
            for i in 0..self.batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                gemm_nt(
                    gi,
                    &bv[b_off(i)..b_off(i) + k * n],
                    &mut ga[a_off(i)..a_off(i) + m * k],
                    m,
                    n,
                    k,
                );
            }
        }
        if ctx.wants(self.b) {
            let gb = ctx.grad(self.b);
            for i in 0..self.batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                gemm_tn(
                    &av[a_off(i)..a_off(i) + m * k],
                    gi,
                    &mut gb[b_off(i)..b_off(i) + k * n],
                    m,
                    k,
                    n,
                );
            }
        }
    }
}

/// Batched matrix product `[.., m, k] · [.., k, n]`.
///
/// Leading dimensions must match, or one side must be a plain matrix that is
/// shared across the other side's batch.
pub fn matmul<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
        return Err(Error::shape("matmul", &sa, &sb));
    }
    let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
    let n = sb[sb.len() - 1];
    let lead_a = &sa[..sa.len() - 2];
    let lead_b = &sb[..sb.len() - 2];
    let (a_batched, b_batched, lead) = if lead_a == lead_b {
        let batched = !lead_a.is_empty();
        (batched, batched, lead_a.to_vec())
    } else if lead_b.is_empty() {
        (true, false, lead_a.to_vec())
    } else if lead_a.is_empty() {
        (false, true, lead_b.to_vec())
    } else {
        return Err(Error::shape("matmul", &sa, &sb));
    };
    let batch: usize = lead.iter().product();
    let mut value = vec![0.0; batch * m * n];
    a.with_value(|av| {
        b.with_value(|bv| {
            for i in 0..batch {
                let ao = if a_batched { i * m * k } else { 0 };
                let bo = if b_batched { i * k * n } else { 0 };
                gemm(
                    &av[ao..ao + m * k],
                    &bv[bo..bo + k * n],
                    &mut value[i * m * n..(i + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        })
    });
    let mut shape = lead;
    shape.extend([m, n]);
    let rg = a.requires_grad() || b.requires_grad();
    let op = MatmulOp {
        a: a.id(),
        b: b.id(),
        batch,
        a_batched,
        b_batched,
        m,
        k,
        n,
    };
    Ok(a.tape().push(shape, value, rg, op))
}

struct LinearOp {
    x: usize,
    w: usize,
    b: Option<usize>,
    rows: usize,
    d_in: usize,
    d_out: usize,
}

impl Backward for LinearOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let (rows, d_in, d_out) = (self.rows, self.d_in, self.d_out);
        if ctx.wants(self.x) {
            let wv = ctx.value(self.w);
            gemm_nt(g, wv, ctx.grad(self.x), rows, d_out, d_in);
        }
        if ctx.wants(self.w) {
            let xv = ctx.value(self.x);
            gemm_tn(xv, g, ctx.grad(self.w), rows, d_in, d_out);
        }
        if let Some(b) = self.b.filter(|&b| ctx.wants(b)) {
            let gb = ctx.grad(b);
            for row in g.chunks(d_out) {
                for (d, r) in gb.iter_mut().zip(row) {
                    *d += r;
                }
            }
        }
    }
}

/// Affine map `x · w + b` over the last axis of `x`; `w` is `[d_in, d_out]`.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>> {
    let (sx, sw) = (x.shape(), w.shape());
    let d_in = *sx.last().ok_or_else(|| Error::shape("linear", &sx, &sw))?;
    if sw.len() != 2 || sw[0] != d_in {
        return Err(Error::shape("linear", &sx, &sw));
    }
    let d_out = sw[1];
    if let Some(b) = b {
        if b.shape() != [d_out] {
            return Err(Error::shape("linear bias", &sw, &b.shape()));
        }
    }
    let rows = x.numel() / d_in.max(1);
    let mut value = vec![0.0; rows * d_out];
    if let Some(b) = b {
        b.with_value(|bv| {
            for row in value.chunks_mut(d_out) {
                row.copy_from_slice(bv);
            }
        });
    }
    x.with_value(|xv| w.with_value(|wv| gemm(xv, wv, &mut value, rows, d_in, d_out)));
    let mut shape = sx;
    *shape.last_mut().unwrap() = d_out;
    let rg = x.requires_grad() || w.requires_grad() || b.is_some_and(|b| b.requires_grad());
    let op = LinearOp {
        x: x.id(),
        w: w.id(),
        b: b.map(|b| b.id()),
        rows,
        d_in,
        d_out,
    };
    Ok(x.tape().push(shape, value, rg, op))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Tape, Tensor};

    #[test]
    fn two_by_two_times_ones() {
        let t = Tape::new();
        let a = t.constant(Tensor::new([2, 2], vec![1., 2., 3., 4.]).unwrap());
        let b = t.constant(Tensor::new([2, 1], vec![1., 1.]).unwrap());
        assert_eq!(matmul(a, b).unwrap().to_tensor().data(), &[3., 7.]);
    }

    #[test]
    fn identity_leaves_input() {
        let t = Tape::new();
        let x = Tensor::from_fn([3, 4], |i| i as f64 * 0.5 - 1.0);
        let y = matmul(t.constant(Tensor::eye(3)), t.constant(x.clone())).unwrap();
        assert_eq!(y.to_tensor(), x);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let t = Tape::new();
        let a = t.constant(Tensor::zeros([2, 3]));
        let b = t.constant(Tensor::zeros([2, 3]));
        let msg = matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn linear_constant_bias_with_zero_weight() {
        let t = Tape::new();
        let x = t.constant(Tensor::from_fn([2, 3, 4], |i| i as f64));
        let w = t.constant(Tensor::zeros([4, 2]));
        let b = t.constant(Tensor::new([2], vec![1.5, -2.0]).unwrap());
        let y = linear(x, w, Some(b)).unwrap().to_tensor();
        assert_eq!(y.shape(), &[2, 3, 2]);
        for pair in y.data().chunks(2) {
            assert_eq!(pair, &[1.5, -2.0]);
        }
    }
}
