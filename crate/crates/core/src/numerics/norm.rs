use super::tape::{Backward, GradCtx, Var};
use crate::error::{Error, Result};

struct LayerNormOp {
    x: usize,
    gamma: usize,
    beta: usize,
    d: usize,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

impl Backward for LayerNormOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let d = self.d;
        if ctx.wants(self.beta) {
            let gb = ctx.grad(self.beta);
            for row in g.chunks(d) {
                for j in 0..d {
                    gb[j] += row[j];
                }
            }
        }
        if ctx.wants(self.gamma) {
            let gg = ctx.grad(self.gamma);
            for (row, xh) in g.chunks(d).zip(self.xhat.chunks(d)) {
                for j in 0..d {
                    gg[j] += row[j] * xh[j];
                }
            }
        }
        if ctx.wants(self.x) {
            let gamma = ctx.value(self.gamma);
            let gx = ctx.grad(self.x);
            let inv_d = 1.0 / d as f64;
            for (r, ((row, xh), dx)) in g
                .chunks(d)
                .zip(self.xhat.chunks(d))
                .zip(gx.chunks_mut(d))
                .enumerate()
            {
                let mut mean_g = 0.0;
                let mut mean_gx = 0.0;
                for j in 0..d {
                    let gh = row[j] * gamma[j];
                    mean_g += gh;
                    mean_gx += gh * xh[j];
                }
                mean_g *= inv_d;
                mean_gx *= inv_d;
                for j in 0..d {
                    let gh = row[j] * gamma[j];
                    dx[j] += self.rstd[r] * (gh - mean_g - xh[j] * mean_gx);
                }
            }
        }
    }
}

/// Normalises the last axis to zero mean and unit (population) variance,
/// then applies `gamma · x̂ + beta`.
pub fn layer_norm<'t>(x: Var<'t>, gamma: Var<'t>, beta: Var<'t>, eps: f64) -> Result<Var<'t>> {
    let sx = x.shape();
    let d = *sx.last().unwrap_or(&0);
    if d == 0 || gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::shape("layer_norm", &sx, &gamma.shape()));
    }
    let rows = x.numel() / d;
    let mut xhat = Vec::with_capacity(rows * d);
    let mut rstd = Vec::with_capacity(rows);
    x.with_value(|xv| {
        for row in xv.chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            rstd.push(r);
            xhat.extend(row.iter().map(|v| (v - mean) * r));
        }
    });
    let value = gamma.with_value(|gv| {
        beta.with_value(|bv| {
            xhat.chunks(d)
                .flat_map(|row| (0..d).map(move |j| gv[j] * row[j] + bv[j]))
                .collect()
        })
    });
    let rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    let op = LayerNormOp {
        x: x.id(),
        gamma: gamma.id(),
        beta: beta.id(),
        d,
        xhat,
        rstd,
    };
    Ok(x.tape().push(sx, value, rg, op))
}
