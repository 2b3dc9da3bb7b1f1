use super::scan::{selective_project, selective_scan, ScanOptions, SsmParams};
use crate::error::{Error, Result};
use crate::numerics::{self as nx, Var};

/// Weights of one Mamba block, already placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct MambaWeights<'t> {
    /// `[d_model, E]`
    pub in_s: Var<'t>,
    /// `[d_model, E]`
    pub in_z: Var<'t>,
    /// `[E, d_conv]`
    pub conv_w: Var<'t>,
    /// `[E]`
    pub conv_b: Var<'t>,
    pub ssm: SsmParams<'t>,
    /// `[E, d_model]`
    pub out: Var<'t>,
}

/// Gated selective-SSM block, `[b, L, d_model] → [b, L, d_model]`.
///
/// ```text
/// S  = x·W_S            Z = x·W_Z
/// S' = SiLU(causal_conv(S))
/// Y  = (SiLU(Z) ⊙ scan(S')) · W_out
/// ```
pub fn mamba_block<'t>(x: Var<'t>, w: &MambaWeights<'t>, options: ScanOptions) -> Result<Var<'t>> {
    let sx = x.shape();
    let ws = w.in_s.shape();
    if sx.len() != 3 || ws.len() != 2 || sx[2] != ws[0] {
        return Err(Error::shape("mamba_block", &sx, &ws));
    }
    let s = nx::linear(x, w.in_s, None)?;
    let z = nx::linear(x, w.in_z, None)?;
    let s = nx::silu(nx::causal_conv1d(s, w.conv_w, Some(w.conv_b))?);
    let inputs = selective_project(s, &w.ssm)?;
    let a = nx::scale(nx::apply_unary(w.ssm.a_log, nx::UnaryKind::Exp), -1.0);
    let y = selective_scan(&inputs, a, w.ssm.d_skip, options)?;
    let gated = nx::mul(nx::silu(z), y)?;
    nx::linear(gated, w.out, None)
}
