use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{self as nx, Tensor, Var};

/// `‖pred − truth‖²_F / ‖truth‖²_F`.
pub fn nmse(pred: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("nmse", &[pred.len()], &[truth.len()]));
    }
    let energy: f64 = truth.iter().map(|t| t.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(Error::Domain("nmse of a zero-energy target".into()));
    }
    let err: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).norm_sqr())
        .sum();
    Ok(err / energy)
}

/// [`nmse`] on the real view, where each complex entry is two reals.
pub fn nmse_real(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("nmse", &[pred.len()], &[truth.len()]));
    }
    let energy: f64 = truth.iter().map(|t| t * t).sum();
    if !(energy > 0.0) {
        return Err(Error::Domain("nmse of a zero-energy target".into()));
    }
    let err: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(err / energy)
}

/// Differentiable NMSE of `pred` against a constant target.
pub fn nmse_loss<'t>(pred: Var<'t>, truth: &Tensor) -> Result<Var<'t>> {
    let energy = truth.sum_sq();
    if !(energy > 0.0) {
        return Err(Error::Domain("nmse of a zero-energy target".into()));
    }
    let diff = nx::sub(pred, pred.tape().constant(truth.clone()))?;
    Ok(nx::scale(nx::sum(nx::mul(diff, diff)?), 1.0 / energy))
}

/// `(RMSE, MAE)` with `|·|` the complex modulus per element.
pub fn error_metrics(pred: &[Complex64], truth: &[Complex64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::shape("error_metrics", &[pred.len()], &[truth.len()]));
    }
    let n = pred.len().max(1) as f64;
    let (sq, abs) = pred
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(sq, abs), (p, t)| {
            let d = p - t;
            (sq + d.norm_sqr(), abs + d.norm())
        });
    Ok(((sq / n).sqrt(), abs / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: &[(f64, f64)]) -> Vec<Complex64> {
        v.iter().map(|&(re, im)| Complex64::new(re, im)).collect()
    }

    #[test]
    fn nmse_examples() {
        let t = c(&[(1.0, -2.0), (0.5, 3.0)]);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&c(&[(0.0, 0.0); 2]), &t).unwrap(), 1.0);
        assert_eq!(nmse_real(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(
            nmse(&t, &c(&[(0.0, 0.0); 2])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn error_metric_examples() {
        let t = c(&[(1.0, -2.0), (0.5, 3.0)]);
        assert_eq!(error_metrics(&t, &t).unwrap(), (0.0, 0.0));
        let shifted: Vec<_> = t.iter().map(|v| v + 3.0).collect();
        assert_eq!(error_metrics(&shifted, &t).unwrap(), (3.0, 3.0));
        let (rmse, mae) =
            error_metrics(&c(&[(0.0, 0.0), (0.0, 2.0)]), &c(&[(0.0, 0.0); 2])).unwrap();
        assert_eq!(rmse, 2f64.sqrt());
        assert_eq!(mae, 1.0);
    }
}
