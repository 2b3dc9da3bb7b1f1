use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;

use super::config::{kmh_to_mps, ChannelConfig};
use crate::rng::Rng;

/// One propagation path.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    /// Complex amplitude (attenuation and initial phase).
    pub gain: Complex64,
    pub delay_s: f64,
    /// Angle between the velocity vector and the arrival direction.
    pub velocity_angle: f64,
    pub doppler_hz: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultipathParams {
    pub paths: Vec<Path>,
}

impl MultipathParams {
    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// `(v/λ)·cos φ̃`
pub fn doppler_shift(speed_mps: f64, wavelength: f64, velocity_angle: f64) -> f64 {
    speed_mps / wavelength * velocity_angle.cos()
}

/// Draws the path set of one sequence.
///
/// Delays are uniform on `[0, max_delay]` with powers following
/// `exp(−τ/τ_rms)`, normalised so that `Σ|α_l|² = 1`. With a Rician
/// K-factor the first path is a zero-delay line-of-sight component holding
/// `K/(K+1)` of the power. Phases and all angles are uniform.
pub fn sample_paths(cfg: &ChannelConfig, rng: &mut Rng) -> MultipathParams {
    let m = cfg.paths;
    let lambda = cfg.wavelength();
    let speed = kmh_to_mps(cfg.speed_kmh);
    let los = cfg.rician_k.is_some();

    let mut delays: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * cfg.max_delay_s).collect();
    if los {
        delays[0] = 0.0;
    }
    let weights: Vec<f64> = delays
        .iter()
        .map(|&tau| (-tau / cfg.rms_delay_spread_s).exp())
        .collect();

    let powers: Vec<f64> = match cfg.rician_k {
        Some(k) if m > 1 => {
            let scattered: f64 = weights[1..].iter().sum();
            let los_power = k / (k + 1.0);
            std::iter::once(los_power)
                .chain(
                    weights[1..]
                        .iter()
                        .map(|w| w / scattered * (1.0 - los_power)),
                )
                .collect()
        }
        _ => {
            let total: f64 = weights.iter().sum();
            weights.iter().map(|w| w / total).collect()
        }
    };

    let paths = powers
        .iter()
        .zip(&delays)
        .map(|(&power, &delay_s)| {
            let phase = rng.gen_range(-PI..PI);
            let velocity_angle = rng.gen_range(-PI..PI);
            let azimuth = rng.gen_range(-PI..=PI);
            let elevation = rng.gen_range(0.0..=PI);
            Path {
                gain: Complex64::from_polar(power.sqrt(), phase),
                delay_s,
                velocity_angle,
                doppler_hz: doppler_shift(speed, lambda, velocity_angle),
                azimuth,
                elevation,
            }
        })
        .collect();
    MultipathParams { paths }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn doppler_reference_values() {
        let lambda = super::super::config::SPEED_OF_LIGHT / 2.4e9;
        assert!(doppler_shift(20.0, lambda, FRAC_PI_2).abs() < 1e-12);
        assert_eq!(doppler_shift(20.0, lambda, 0.0), 20.0 / lambda);
        // 60 km/h at 2.4 GHz: 16.667 · 2.4e9 / c
        let f = doppler_shift(kmh_to_mps(60.0), lambda, 0.0);
        assert!((f - 133.425_638_1).abs() < 1e-6, "{f}");
    }

    #[test]
    fn power_normalised_per_draw() {
        let cfg = ChannelConfig::desk();
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let p = sample_paths(&cfg, &mut rng);
            assert_eq!(p.paths.len(), cfg.paths);
            assert!((p.total_power() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_los_path_holds_everything() {
        let cfg = ChannelConfig {
            paths: 1,
            rician_k: Some(3.0),
            ..ChannelConfig::desk()
        };
        let p = sample_paths(&cfg, &mut stream(2, 0));
        assert!((p.paths[0].gain.norm_sqr() - 1.0).abs() < 1e-15);
        assert_eq!(p.paths[0].delay_s, 0.0);
    }

    #[test]
    fn rician_split() {
        let cfg = ChannelConfig {
            rician_k: Some(4.0),
            ..ChannelConfig::desk()
        };
        let p = sample_paths(&cfg, &mut stream(3, 0));
        assert!((p.paths[0].gain.norm_sqr() - 0.8).abs() < 1e-12);
        assert!((p.total_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angles_in_range() {
        let cfg = ChannelConfig::desk();
        let mut rng = stream(4, 0);
        for _ in 0..200 {
            for p in sample_paths(&cfg, &mut rng).paths {
                assert!((-PI..=PI).contains(&p.azimuth));
                assert!((0.0..=PI).contains(&p.elevation));
                assert!((0.0..=cfg.max_delay_s).contains(&p.delay_s));
            }
        }
    }
}
