//! Central finite-difference gradient checks.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tol: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is ~0 are judged on absolute error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `(f(+h) − f(−h)) / 2h` for a scalar function of a shift.
pub fn central_difference(mut f: impl FnMut(f64) -> Result<f64>, step: f64) -> Result<f64> {
    Ok((f(step)? - f(-step)?) / (2.0 * step))
}

/// Compares the tape gradient of scalar `f` at `x` against central
/// differences in every coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = f(&tape, xv)?;
    if y.numel() != 1 {
        return Err(Error::Graph(format!(
            "grad_check needs a scalar function, got {:?}",
            y.shape()
        )));
    }
    let analytic = tape.backward(y)?.get_or_zeros(xv).into_data();

    let eval = |probe: Tensor| -> Result<f64> {
        let t = Tape::new();
        let v = t.constant(probe);
        Ok(f(&t, v)?.item())
    };
    let mut numeric = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let d = central_difference(
            |h| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                eval(p)
            },
            cfg.step,
        )?;
        numeric.push(d);
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n, cfg.floor))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        passed: max_rel_error < cfg.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops;

    #[test]
    fn sum_is_exact_on_dyadic_inputs() {
        let x = Tensor::from_fn([5], |i| i as f64 - 2.0);
        let cfg = GradCheckConfig {
            step: 2f64.powi(-17),
            ..Default::default()
        };
        let r = grad_check(|_, v| Ok(ops::sum(v)), &x, cfg).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_vector_valued_function() {
        let x = Tensor::zeros([3]);
        assert!(grad_check(|_, v| Ok(ops::silu(v)), &x, GradCheckConfig::default()).is_err());
    }
}
