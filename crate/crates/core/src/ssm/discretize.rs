//! Zero-order-hold discretisation of a scalar (diagonal) continuous system.

use crate::error::{Error, Result};

/// Below this |ΔA| the ZOH input gain switches to its series limit.
pub const SERIES_THRESHOLD: f64 = 1e-8;

/// How the discrete input matrix is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// `B̄ = (ΔA)⁻¹(exp(ΔA) − 1)·ΔB`
    #[default]
    Exact,
    /// `B̄ = ΔB`
    Euler,
}

/// `φ(z) = (e^z − 1)/z`, with `φ(z) ≈ 1 + z/2` near zero.
pub fn zoh_gain(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `φ'(z)`. The closed form cancels badly near zero, so small arguments use
/// the Taylor series `1/2 + z/3 + z²/8 + z³/30`.
pub fn zoh_gain_derivative(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        0.5
    } else if z.abs() < 1e-3 {
        0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z / 30.0))
    } else {
        (z * z.exp() - z.exp_m1()) / (z * z)
    }
}

/// `(Ā, B̄)` for one diagonal entry.
pub fn discretize(a: f64, b: f64, delta: f64) -> Result<(f64, f64)> {
    discretize_with(a, b, delta, Discretization::Exact)
}

pub fn discretize_with(a: f64, b: f64, delta: f64, mode: Discretization) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!(
            "step size Δ must be positive, got {delta}"
        )));
    }
    let z = delta * a;
    let a_bar = z.exp();
    let b_bar = match mode {
        Discretization::Exact => delta * zoh_gain(z) * b,
        Discretization::Euler => delta * b,
    };
    Ok((a_bar, b_bar))
}
