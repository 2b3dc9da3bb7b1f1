//! Convolutions and global pooling.

use super::linalg::{gemm, gemm_nt, gemm_tn};
use super::tape::{Backward, GradCtx, Var};
use crate::error::{Error, Result};

/// Fills `cols[(c·9 + ky·3 + kx), (y·w + x)]` from one `[c, h, w]` image,
/// zero padded by one pixel on every side.
fn im2col(img: &[f64], c_in: usize, h: usize, w: usize, cols: &mut [f64]) {
    let p = h * w;
    for c in 0..c_in {
        let plane = &img[c * p..(c + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(c * 9 + ky * 3 + kx) * p..(c * 9 + ky * 3 + kx + 1) * p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x, d) in dst.iter_mut().enumerate() {
                        let sx = x as isize + kx as isize - 1;
                        *d = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, img: &mut [f64]) {
    let p = h * w;
    for c in 0..c_in {
        let plane = &mut img[c * p..(c + 1) * p];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(c * 9 + ky * 3 + kx) * p..(c * 9 + ky * 3 + kx + 1) * p];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2dOp {
    x: usize,
    k: usize,
    b: usize,
    cols: Vec<f64>,
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
}

impl Backward for Conv2dOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let p = self.h * self.w;
        let ck = self.c_in * 9;
        if ctx.wants(self.b) {
            let gb = ctx.grad(self.b);
            for plane in g.chunks(p).enumerate() {
                gb[plane.0 % self.c_out] += plane.1.iter().sum::<f64>();
            }
        }
        if ctx.wants(self.k) {
            let gk = ctx.grad(self.k);
            for i in 0..self.batch {
                let gi = &g[i * self.c_out * p..(i + 1) * self.c_out * p];
                let cols = &self.cols[i * ck * p..(i + 1) * ck * p];
                gemm_nt(gi, cols, gk, self.c_out, p, ck);
            }
        }
        if ctx.wants(self.x) {
            let kv = ctx.value(self.k);
            let mut dcols = vec![0.0; ck * p];
            let gx = ctx.grad(self.x);
            for i in 0..self.batch {
                dcols.fill(0.0);
                let gi = &g[i * self.c_out * p..(i + 1) * self.c_out * p];
                gemm_tn(kv, gi, &mut dcols, self.c_out, ck, p);
                col2im(
                    &dcols,
                    self.c_in,
                    self.h,
                    self.w,
                    &mut gx[i * self.c_in * p..(i + 1) * self.c_in * p],
                );
            }
        }
    }
}

/// 3×3 cross-correlation with zero padding 1, so `[b, c_in, h, w]` maps to
/// `[b, c_out, h, w]`.
pub fn conv2d_3x3<'t>(x: Var<'t>, kernels: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
    let (sx, sk) = (x.shape(), kernels.shape());
    if sx.len() != 4 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 || sk[1] != sx[1] {
        return Err(Error::shape("conv2d_3x3", &sx, &sk));
    }
    if bias.shape() != [sk[0]] {
        return Err(Error::shape("conv2d_3x3 bias", &sk, &bias.shape()));
    }
    let (batch, c_in, h, w) = (sx[0], sx[1], sx[2], sx[3]);
    let c_out = sk[0];
    let p = h * w;
    let ck = c_in * 9;
    let mut cols = vec![0.0; batch * ck * p];
    let mut value = vec![0.0; batch * c_out * p];
    x.with_value(|xv| {
        kernels.with_value(|kv| {
            bias.with_value(|bv| {
                for i in 0..batch {
                    let c = &mut cols[i * ck * p..(i + 1) * ck * p];
                    im2col(&xv[i * c_in * p..(i + 1) * c_in * p], c_in, h, w, c);
                    let out = &mut value[i * c_out * p..(i + 1) * c_out * p];
                    for (o, plane) in out.chunks_mut(p).enumerate() {
                        plane.fill(bv[o]);
                    }
                    gemm(kv, c, out, c_out, ck, p);
                }
            })
        })
    });
    let rg = x.requires_grad() || kernels.requires_grad() || bias.requires_grad();
    let op = Conv2dOp {
        x: x.id(),
        k: kernels.id(),
        b: bias.id(),
        cols,
        batch,
        c_in,
        c_out,
        h,
        w,
    };
    Ok(x.tape().push(vec![batch, c_out, h, w], value, rg, op))
}

struct CausalConvOp {
    x: usize,
    k: usize,
    b: Option<usize>,
    batch: usize,
    len: usize,
    ch: usize,
    taps: usize,
}

impl Backward for CausalConvOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let (len, ch, taps) = (self.len, self.ch, self.taps);
        let xv = ctx.value(self.x);
        let kv = ctx.value(self.k);
        if let Some(b) = self.b.filter(|&b| ctx.wants(b)) {
            let gb = ctx.grad(b);
            for row in g.chunks(ch) {
                for c in 0..ch {
                    gb[c] += row[c];
                }
            }
        }
        if ctx.wants(self.k) {
            let gk = ctx.grad(self.k);
            for bi in 0..self.batch {
                for t in 0..len {
                    let grow = &g[(bi * len + t) * ch..(bi * len + t + 1) * ch];
                    for j in 0..taps {
                        let Some(src) = (t + j + 1).checked_sub(taps) else {
                            continue;
                        };
                        let xrow = &xv[(bi * len + src) * ch..(bi * len + src + 1) * ch];
                        for c in 0..ch {
                            gk[c * taps + j] += grow[c] * xrow[c];
                        }
                    }
                }
            }
        }
        if ctx.wants(self.x) {
            let gx = ctx.grad(self.x);
            for bi in 0..self.batch {
                for t in 0..len {
                    let grow = &g[(bi * len + t) * ch..(bi * len + t + 1) * ch];
                    for j in 0..taps {
                        let Some(src) = (t + j + 1).checked_sub(taps) else {
                            continue;
                        };
                        let xg = &mut gx[(bi * len + src) * ch..(bi * len + src + 1) * ch];
                        for c in 0..ch {
                            xg[c] += grow[c] * kv[c * taps + j];
                        }
                    }
                }
            }
        }
    }
}

/// Depthwise causal convolution over `[b, len, ch]` with kernels `[ch, taps]`.
///
/// `y[t, c] = Σ_j k[c, j] · x[t − (taps − 1) + j, c]`, zero before the start,
/// so the last tap multiplies the current step.
pub fn causal_conv1d<'t>(x: Var<'t>, kernels: Var<'t>, bias: Option<Var<'t>>) -> Result<Var<'t>> {
    let (sx, sk) = (x.shape(), kernels.shape());
    if sk.len() != 2 || sk[1] < 1 {
        return Err(Error::Config(format!(
            "causal conv kernel shape {sk:?} needs at least one tap"
        )));
    }
    if sx.len() != 3 || sx[2] != sk[0] {
        return Err(Error::shape("causal_conv1d", &sx, &sk));
    }
    if let Some(b) = bias {
        if b.shape() != [sk[0]] {
            return Err(Error::shape("causal_conv1d bias", &sk, &b.shape()));
        }
    }
    let (batch, len, ch) = (sx[0], sx[1], sx[2]);
    let taps = sk[1];
    let mut value = vec![0.0; batch * len * ch];
    x.with_value(|xv| {
        kernels.with_value(|kv| {
            for bi in 0..batch {
                for t in 0..len {
                    let out = &mut value[(bi * len + t) * ch..(bi * len + t + 1) * ch];
                    for j in 0..taps {
                        let Some(src) = (t + j + 1).checked_sub(taps) else {
                            continue;
                        };
                        let xrow = &xv[(bi * len + src) * ch..(bi * len + src + 1) * ch];
                        for c in 0..ch {
                            out[c] += kv[c * taps + j] * xrow[c];
                        }
                    }
                }
            }
        })
    });
    if let Some(b) = bias {
        b.with_value(|bv| {
            for row in value.chunks_mut(ch) {
                for c in 0..ch {
                    row[c] += bv[c];
                }
            }
        });
    }
    let rg =
        x.requires_grad() || kernels.requires_grad() || bias.is_some_and(|b| b.requires_grad());
    let op = CausalConvOp {
        x: x.id(),
        k: kernels.id(),
        b: bias.map(|b| b.id()),
        batch,
        len,
        ch,
        taps,
    };
    Ok(x.tape().push(sx, value, rg, op))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

struct PoolOp {
    x: usize,
    kind: PoolKind,
    plane: usize,
    argmax: Vec<usize>,
}

impl Backward for PoolOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        if !ctx.wants(self.x) {
            return;
        }
        let gx = ctx.grad(self.x);
        match self.kind {
            PoolKind::Avg => {
                let inv = 1.0 / self.plane as f64;
                for (i, gi) in g.iter().enumerate() {
                    for d in &mut gx[i * self.plane..(i + 1) * self.plane] {
                        *d += gi * inv;
                    }
                }
            }
            PoolKind::Max => {
                for (i, gi) in g.iter().enumerate() {
                    gx[i * self.plane + self.argmax[i]] += gi;
                }
            }
        }
    }
}

/// Per-channel spatial mean or max of `[b, c, h, w]`, giving `[b, c, 1, 1]`.
///
/// Max ties resolve to the first element in row-major order.
pub fn pool_global(x: Var<'_>, kind: PoolKind) -> Result<Var<'_>> {
    let sx = x.shape();
    if sx.len() != 4 || sx[2] == 0 || sx[3] == 0 {
        return Err(Error::shape("pool_global", &sx, &[]));
    }
    let plane = sx[2] * sx[3];
    let mut argmax = Vec::new();
    let value = x.with_value(|xv| {
        xv.chunks(plane)
            .map(|p| match kind {
                PoolKind::Avg => p.iter().sum::<f64>() / plane as f64,
                PoolKind::Max => {
                    let mut best = 0;
                    for (j, &v) in p.iter().enumerate() {
                        if v > p[best] {
                            best = j;
                        }
                    }
                    argmax.push(best);
                    p[best]
                }
            })
            .collect()
    });
    let op = PoolOp {
        x: x.id(),
        kind,
        plane,
        argmax,
    };
    Ok(x.tape()
        .push(vec![sx[0], sx[1], 1, 1], value, x.requires_grad(), op))
}
