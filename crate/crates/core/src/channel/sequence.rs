use std::f64::consts::PI;

use num_complex::Complex64;

use super::config::ChannelConfig;
use super::geometry::steering_vector;
use super::paths::{sample_paths, MultipathParams};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Complex CSI over `[frame][antenna][subcarrier]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSequence {
    pub frames: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub speed_kmh: f64,
    pub data: Vec<Complex64>,
}

impl CsiSequence {
    pub fn new(
        frames: usize,
        antennas: usize,
        subcarriers: usize,
        speed_kmh: f64,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != frames * antennas * subcarriers {
            return Err(Error::shape(
                "csi sequence",
                &[frames, antennas, subcarriers],
                &[data.len()],
            ));
        }
        Ok(Self {
            frames,
            antennas,
            subcarriers,
            speed_kmh,
            data,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.antennas * self.subcarriers
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn at(&self, t: usize, antenna: usize, k: usize) -> Complex64 {
        self.data[(t * self.antennas + antenna) * self.subcarriers + k]
    }

    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|h| h.norm_sqr()).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Frames `start..start + len` and subcarriers `k0..k0 + width`.
    pub fn window(&self, start: usize, len: usize, k0: usize, width: usize) -> Result<CsiSequence> {
        if start + len > self.frames || k0 + width > self.subcarriers {
            return Err(Error::shape(
                "csi window",
                &[self.frames, self.subcarriers],
                &[start + len, k0 + width],
            ));
        }
        let mut data = Vec::with_capacity(len * self.antennas * width);
        for t in start..start + len {
            for a in 0..self.antennas {
                let base = (t * self.antennas + a) * self.subcarriers + k0;
                data.extend_from_slice(&self.data[base..base + width]);
            }
        }
        CsiSequence::new(len, self.antennas, width, self.speed_kmh, data)
    }
}

/// `H_t` as `[antenna][subcarrier]`:
/// `h_t[k] = Σ_l α_l · e^{j2π(ν_l t − τ_l f_k)} · a(θ_l, φ_l)`.
pub fn csi_frame(paths: &MultipathParams, cfg: &ChannelConfig, t: f64) -> Vec<Complex64> {
    let n_t = cfg.geometry.antennas();
    let k_total = cfg.total_subcarriers;
    let lambda = cfg.wavelength();
    let mut frame = vec![Complex64::new(0.0, 0.0); n_t * k_total];
    let mut spectral = vec![Complex64::new(0.0, 0.0); k_total];
    for p in &paths.paths {
        let steer = steering_vector(&cfg.geometry, p.azimuth, p.elevation, lambda);
        for (k, s) in spectral.iter_mut().enumerate() {
            let phase = 2.0 * PI * (p.doppler_hz * t - p.delay_s * cfg.subcarrier_hz(k));
            *s = p.gain * Complex64::from_polar(1.0, phase);
        }
        for (a, &sv) in steer.iter().enumerate() {
            let row = &mut frame[a * k_total..(a + 1) * k_total];
            for (h, &s) in row.iter_mut().zip(&spectral) {
                *h += s * sv;
            }
        }
    }
    frame
}

/// `frames` snapshots at `t = 0, Δt, …` of one freshly drawn path set.
pub fn generate_sequence(cfg: &ChannelConfig, rng: &mut Rng, frames: usize) -> Result<CsiSequence> {
    if frames == 0 {
        return Err(Error::field("frames", "must be at least 1"));
    }
    cfg.validate()?;
    let paths = sample_paths(cfg, rng);
    let mut data = Vec::with_capacity(frames * cfg.geometry.antennas() * cfg.total_subcarriers);
    for i in 0..frames {
        data.extend(csi_frame(&paths, cfg, i as f64 * cfg.sample_interval_s));
    }
    CsiSequence::new(
        frames,
        cfg.geometry.antennas(),
        cfg.total_subcarriers,
        cfg.speed_kmh,
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::paths::Path;
    use crate::rng::stream;

    fn one_path(doppler_hz: f64, delay_s: f64) -> MultipathParams {
        MultipathParams {
            paths: vec![Path {
                gain: Complex64::new(1.0, 0.0),
                delay_s,
                velocity_angle: 0.0,
                doppler_hz,
                azimuth: 0.4,
                elevation: 1.2,
            }],
        }
    }

    #[test]
    fn static_single_path_is_the_steering_vector() {
        let cfg = ChannelConfig::desk();
        let paths = one_path(0.0, 0.0);
        let a = steering_vector(&cfg.geometry, 0.4, 1.2, cfg.wavelength());
        for t in [0.0, 0.01] {
            let f = csi_frame(&paths, &cfg, t);
            for ant in 0..4 {
                for k in 0..cfg.total_subcarriers {
                    let h = f[ant * cfg.total_subcarriers + k];
                    assert!((h - a[ant]).norm() < 1e-12);
                    assert!((h.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_speed_frames_identical() {
        let cfg = ChannelConfig {
            speed_kmh: 0.0,
            ..ChannelConfig::desk()
        };
        let s = generate_sequence(&cfg, &mut stream(5, 0), 6).unwrap();
        for t in 1..6 {
            assert_eq!(s.frame(t), s.frame(0));
        }
    }

    #[test]
    fn sequence_shape() {
        let cfg = ChannelConfig::desk();
        let s = generate_sequence(&cfg, &mut stream(6, 0), 20).unwrap();
        assert_eq!((s.frames, s.antennas, s.subcarriers), (20, 4, 16));
        assert_eq!(s.data.len(), 20 * 4 * 16);
        assert!(s.data.iter().all(|h| h.re.is_finite() && h.im.is_finite()));
    }

    #[test]
    fn window_extracts_band() {
        let cfg = ChannelConfig::desk();
        let s = generate_sequence(&cfg, &mut stream(7, 0), 5).unwrap();
        let w = s.window(1, 3, 8, 8).unwrap();
        assert_eq!(w.at(0, 2, 0), s.at(1, 2, 8));
        assert_eq!(w.at(2, 3, 7), s.at(3, 3, 15));
        assert!(s.window(3, 3, 0, 8).is_err());
    }
}
