use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Moment buffers for Adam, keyed by parameter name.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update over every `(name, param, grad)` triple.
    pub fn step<'a>(
        &mut self,
        items: impl IntoIterator<Item = (&'a str, &'a mut Tensor, &'a Tensor)>,
        lr: f64,
    ) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, param, grad) in items {
            if param.shape() != grad.shape() {
                return Err(Error::shape("adam", param.shape(), grad.shape()));
            }
            let n = param.numel();
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                return Err(Error::shape("adam moments", &[m.len()], param.shape()));
            }
            for (((p, &g), m), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::default();
        let mut p = Tensor::from_fn([3], |i| i as f64);
        let before = p.clone();
        let g = Tensor::zeros([3]);
        s.step([("p", &mut p, &g)], 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::default();
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        s.step([("p", &mut p, &g)], 0.01).unwrap();
        // m̂ = v̂ = 1, so the step is lr / (1 + ε)
        assert!((p.item() + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut s = AdamState::default();
        let mut w = Tensor::scalar(0.0);
        for _ in 0..200 {
            let g = Tensor::scalar(2.0 * (w.item() - 3.0));
            s.step([("w", &mut w, &g)], 0.1).unwrap();
        }
        assert!((w.item() - 3.0).abs() < 1e-2, "w = {}", w.item());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = AdamState::default();
        let mut p = Tensor::zeros([2]);
        let g = Tensor::zeros([3]);
        assert!(s.step([("p", &mut p, &g)], 1e-3).is_err());
        let g = Tensor::zeros([2]);
        assert!(s.step([("p", &mut p, &g)], 0.0).is_err());
    }
}
