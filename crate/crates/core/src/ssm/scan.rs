//! Selective scan: the input-dependent discrete recurrence
//!
//! ```text
//! h_t = Ā_t ⊙ h_{t−1} + B̄_t · u_t
//! y_t = C_t · h_t + D ⊙ x_t
//! ```
//!
//! evaluated sequentially, with `(Ā_t, B̄_t)` rediscretised at every step
//! from `(A, B_t, Δ_t)`. `u_t` is `x_t`, or `x_{t−1}` in the lagged variant.

use serde::{Deserialize, Serialize};

use super::discretize::{zoh_gain, zoh_gain_derivative, Discretization};
use crate::error::{Error, Result};
use crate::numerics::{self as nx, Backward, GradCtx, Var};

/// Which input drives the state update at step `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanInput {
    #[default]
    Current,
    /// `h_t = Ā h_{t−1} + B̄ x_{t−1}`, with `x_{−1} = 0`.
    Lagged,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub discretization: Discretization,
    pub input: ScanInput,
}

/// Per-step projections fed to the scan.
#[derive(Clone, Copy, Debug)]
pub struct ScanInputs<'t> {
    /// `[b, L, E]`
    pub x: Var<'t>,
    /// `[b, L, E]`, strictly positive
    pub delta: Var<'t>,
    /// `[b, L, N]`
    pub b: Var<'t>,
    /// `[b, L, N]`
    pub c: Var<'t>,
}

/// Learnable SSM parameters of one Mamba block.
#[derive(Clone, Copy, Debug)]
pub struct SsmParams<'t> {
    /// `log(−A)`, `[E, N]`
    pub a_log: Var<'t>,
    /// `[E]`
    pub dt_bias: Var<'t>,
    /// `[E, N]`
    pub w_b: Var<'t>,
    /// `[E, N]`
    pub w_c: Var<'t>,
    /// `[E, 1]`
    pub w_dt: Var<'t>,
    /// `[E]`
    pub d_skip: Option<Var<'t>>,
}

/// Projects `s` to the selective parameters:
/// `B = s·W_B`, `C = s·W_C`, `Δ = softplus(dt_bias + broadcast(s·w_Δ))`.
pub fn selective_project<'t>(s: Var<'t>, params: &SsmParams<'t>) -> Result<ScanInputs<'t>> {
    let b = nx::linear(s, params.w_b, None)?;
    let c = nx::linear(s, params.w_c, None)?;
    let dt = nx::linear(s, params.w_dt, None)?;
    let delta = nx::apply_unary(nx::add(dt, params.dt_bias)?, nx::UnaryKind::Softplus);
    Ok(ScanInputs { x: s, delta, b, c })
}

struct ScanOp {
    x: usize,
    delta: usize,
    a: usize,
    b: usize,
    c: usize,
    d: Option<usize>,
    dims: Dims,
    options: ScanOptions,
    /// `h_t` for every `(batch, t)`, `[b, L, E, N]`
    states: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Dims {
    batch: usize,
    len: usize,
    e: usize,
    n: usize,
}

/// `(B̄ coefficient, ∂/∂Δ, ∂/∂A)` where `B̄ = coefficient · B`.
#[inline]
fn input_gain(mode: Discretization, delta: f64, a: f64) -> (f64, f64, f64) {
    match mode {
        Discretization::Exact => {
            let z = delta * a;
            let phi = zoh_gain(z);
            let dphi = zoh_gain_derivative(z);
            (delta * phi, phi + z * dphi, delta * delta * dphi)
        }
        Discretization::Euler => (delta, 1.0, 0.0),
    }
}

impl Backward for ScanOp {
    fn backward(&self, g: &[f64], _out: &[f64], ctx: &mut GradCtx<'_>) {
        let Dims { batch, len, e, n } = self.dims;
        let xv = ctx.value(self.x);
        let dv = ctx.value(self.delta);
        let av = ctx.value(self.a);
        let bv = ctx.value(self.b);
        let cv = ctx.value(self.c);
        let skip = self.d.map(|d| ctx.value(d));
        let lagged = self.options.input == ScanInput::Lagged;

        let mut gx = vec![0.0; xv.len()];
        let mut gdelta = vec![0.0; dv.len()];
        let mut ga = vec![0.0; av.len()];
        let mut gb = vec![0.0; bv.len()];
        let mut gc = vec![0.0; cv.len()];
        let mut gd = vec![0.0; e];
        let mut dh = vec![0.0; e * n];

        for bi in 0..batch {
            dh.fill(0.0);
            for t in (0..len).rev() {
                let row = bi * len + t;
                let gy = &g[row * e..(row + 1) * e];
                let xt = &xv[row * e..(row + 1) * e];
                let h = &self.states[row * e * n..(row + 1) * e * n];
                let bt = &bv[row * n..(row + 1) * n];
                let ct = &cv[row * n..(row + 1) * n];

                for ei in 0..e {
                    let gye = gy[ei];
                    if let Some(dval) = skip {
                        gd[ei] += gye * xt[ei];
                        gx[row * e + ei] += gye * dval[ei];
                    }
                    for ni in 0..n {
                        gc[row * n + ni] += gye * h[ei * n + ni];
                        dh[ei * n + ni] += gye * ct[ni];
                    }
                }

                // Recurrence step: h_t = Ā ⊙ h_{t−1} + g(Δ, A) · B · u
                let u_row = if lagged {
                    t.checked_sub(1).map(|s| bi * len + s)
                } else {
                    Some(row)
                };
                for ei in 0..e {
                    let dlt = dv[row * e + ei];
                    let u = u_row.map_or(0.0, |r| xv[r * e + ei]);
                    let mut gu = 0.0;
                    let mut gdl = 0.0;
                    for ni in 0..n {
                        let k = ei * n + ni;
                        let a = av[k];
                        let a_bar = (dlt * a).exp();
                        let (gain, dgain_ddelta, dgain_da) =
                            input_gain(self.options.discretization, dlt, a);
                        let h_prev = if t == 0 {
                            0.0
                        } else {
                            self.states[(row - 1) * e * n + k]
                        };
                        let dhk = dh[k];
                        let g_abar = dhk * h_prev;
                        let g_gain = dhk * bt[ni] * u;
                        gb[row * n + ni] += dhk * gain * u;
                        gu += dhk * gain * bt[ni];
                        gdl += g_abar * a * a_bar + g_gain * dgain_ddelta;
                        ga[k] += g_abar * dlt * a_bar + g_gain * dgain_da;
                        dh[k] = dhk * a_bar;
                    }
                    gdelta[row * e + ei] += gdl;
                    if let Some(r) = u_row {
                        gx[r * e + ei] += gu;
                    }
                }
            }
        }

        ctx.accumulate(self.x, &gx);
        ctx.accumulate(self.delta, &gdelta);
        ctx.accumulate(self.a, &ga);
        ctx.accumulate(self.b, &gb);
        ctx.accumulate(self.c, &gc);
        if let Some(d) = self.d {
            ctx.accumulate(d, &gd);
        }
    }
}

/// Runs the recurrence over `inputs` with state matrix `a` (`[E, N]`,
/// negative entries) and optional feedthrough `d_skip` (`[E]`). `h₀ = 0`.
pub fn selective_scan<'t>(
    inputs: &ScanInputs<'t>,
    a: Var<'t>,
    d_skip: Option<Var<'t>>,
    options: ScanOptions,
) -> Result<Var<'t>> {
    let sx = inputs.x.shape();
    if sx.len() != 3 {
        return Err(Error::shape("selective_scan x", &sx, &[]));
    }
    let (batch, len, e) = (sx[0], sx[1], sx[2]);
    let sa = a.shape();
    if sa.len() != 2 || sa[0] != e {
        return Err(Error::shape("selective_scan A", &sx, &sa));
    }
    let n = sa[1];
    if inputs.delta.shape() != sx {
        return Err(Error::shape("selective_scan Δ", &sx, &inputs.delta.shape()));
    }
    for m in [inputs.b, inputs.c] {
        if m.shape() != [batch, len, n] {
            return Err(Error::shape(
                "selective_scan B/C",
                &[batch, len, n],
                &m.shape(),
            ));
        }
    }
    if let Some(d) = d_skip {
        if d.shape() != [e] {
            return Err(Error::shape("selective_scan D", &[e], &d.shape()));
        }
    }
    let lagged = options.input == ScanInput::Lagged;

    let mut states = vec![0.0; batch * len * e * n];
    let mut y = vec![0.0; batch * len * e];
    let mut failed = None;
    inputs.x.with_value(|xv| {
        inputs.delta.with_value(|dv| {
            a.with_value(|av| {
                inputs.b.with_value(|bv| {
                    inputs.c.with_value(|cv| {
                        let skip = d_skip.map(|d| d.to_tensor().into_data());
                        for bi in 0..batch {
                            for t in 0..len {
                                let row = bi * len + t;
                                let bt = &bv[row * n..(row + 1) * n];
                                let ct = &cv[row * n..(row + 1) * n];
                                let u_row = if lagged {
                                    t.checked_sub(1).map(|s| bi * len + s)
                                } else {
                                    Some(row)
                                };
                                let (prev, cur) = states.split_at_mut(row * e * n);
                                let prev = if t == 0 {
                                    None
                                } else {
                                    Some(&prev[(row - 1) * e * n..])
                                };
                                let cur = &mut cur[..e * n];
                                for ei in 0..e {
                                    let dlt = dv[row * e + ei];
                                    if !(dlt > 0.0) {
                                        failed.get_or_insert(t);
                                    }
                                    let u = u_row.map_or(0.0, |r| xv[r * e + ei]);
                                    let mut acc =
                                        skip.as_ref().map_or(0.0, |d| d[ei] * xv[row * e + ei]);
                                    for ni in 0..n {
                                        let k = ei * n + ni;
                                        let a_bar = (dlt * av[k]).exp();
                                        let (gain, _, _) =
                                            input_gain(options.discretization, dlt, av[k]);
                                        let hp = prev.map_or(0.0, |p| p[k]);
                                        let h = a_bar * hp + gain * bt[ni] * u;
                                        cur[k] = h;
                                        acc += ct[ni] * h;
                                    }
                                    if !acc.is_finite() {
                                        failed.get_or_insert(t);
                                    }
                                    y[row * e + ei] = acc;
                                }
                            }
                        }
                    })
                })
            })
        })
    });
    if let Some(step) = failed {
        return Err(Error::NonFinite {
            op: "selective_scan",
            step,
        });
    }

    let tape = inputs.x.tape();
    let rg = [inputs.x, inputs.delta, a, inputs.b, inputs.c]
        .iter()
        .any(|v| v.requires_grad())
        || d_skip.is_some_and(|d| d.requires_grad());
    let op = ScanOp {
        x: inputs.x.id(),
        delta: inputs.delta.id(),
        a: a.id(),
        b: inputs.b.id(),
        c: inputs.c.id(),
        d: d_skip.map(|d| d.id()),
        dims: Dims { batch, len, e, n },
        options,
        states,
    };
    Ok(tape.push(sx, y, rg, op))
}
