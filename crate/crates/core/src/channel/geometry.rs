use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform planar array: `n_h × n_v` elements with spacings in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    pub spacing_x_m: f64,
    pub spacing_z_m: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spacing in both directions.
    pub fn half_wavelength(n_h: usize, n_v: usize, wavelength: f64) -> Self {
        Self {
            n_h,
            n_v,
            spacing_x_m: wavelength / 2.0,
            spacing_z_m: wavelength / 2.0,
        }
    }

    pub fn antennas(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 {
            return Err(Error::field("geometry.n_h", "must be at least 1"));
        }
        if self.n_v == 0 {
            return Err(Error::field("geometry.n_v", "must be at least 1"));
        }
        if !(self.spacing_x_m > 0.0) {
            return Err(Error::field("geometry.spacing_x_m", "must be positive"));
        }
        if !(self.spacing_z_m > 0.0) {
            return Err(Error::field("geometry.spacing_z_m", "must be positive"));
        }
        Ok(())
    }
}

/// Linear-array response `[1, e^{jψ}, …, e^{j(n−1)ψ}]`.
fn ula(n: usize, psi: f64) -> impl Iterator<Item = Complex64> {
    (0..n).map(move |i| Complex64::from_polar(1.0, i as f64 * psi))
}

/// UPA steering vector `a_h(θ, φ) ⊗ a_v(θ, φ)` for azimuth `theta` and
/// elevation `phi`. Entry `h·n_v + v` is the phase of element `(h, v)`.
pub fn steering_vector(
    geom: &ArrayGeometry,
    theta: f64,
    phi: f64,
    wavelength: f64,
) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let psi_h = k * geom.spacing_x_m * phi.sin() * theta.cos();
    let psi_v = k * geom.spacing_z_m * phi.sin() * theta.sin();
    let av: Vec<Complex64> = ula(geom.n_v, psi_v).collect();
    ula(geom.n_h, psi_h)
        .flat_map(|h| av.iter().map(move |&v| h * v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn broadside_elevation_zero_is_all_ones() {
        let g = ArrayGeometry::half_wavelength(3, 2, 0.125);
        for a in steering_vector(&g, 0.7, 0.0, 0.125) {
            assert_eq!(a, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn two_element_endfire() {
        let lambda = 0.125;
        let g = ArrayGeometry::half_wavelength(2, 1, lambda);
        let a = steering_vector(&g, 0.0, FRAC_PI_2, lambda);
        assert_eq!(a.len(), 2);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::from_polar(1.0, PI)).norm() < 1e-15);
        assert!((a[1].re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sixteen_elements_for_four_by_four() {
        let g = ArrayGeometry::half_wavelength(4, 4, 0.125);
        assert_eq!(steering_vector(&g, 0.3, 1.1, 0.125).len(), 16);
    }

    #[test]
    fn validation_names_field() {
        let mut g = ArrayGeometry::half_wavelength(2, 2, 0.1);
        g.n_v = 0;
        assert!(g
            .validate()
            .unwrap_err()
            .to_string()
            .contains("geometry.n_v"));
    }
}
