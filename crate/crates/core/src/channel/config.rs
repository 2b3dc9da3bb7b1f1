use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Physical layer and propagation settings of the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    /// Total subcarriers across both bands; the lower half is uplink.
    pub total_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub paths: usize,
    pub speed_kmh: f64,
    pub sample_interval_s: f64,
    pub geometry: ArrayGeometry,
    /// RMS spread of the exponential power-delay profile.
    pub rms_delay_spread_s: f64,
    /// Delays are drawn uniformly from `[0, max_delay_s]`.
    pub max_delay_s: f64,
    /// Rician K-factor of a line-of-sight first path; `None` for NLoS.
    #[serde(default)]
    pub rician_k: Option<f64>,
}

impl ChannelConfig {
    /// Small default: 2×2 array, 16 subcarriers, 6 paths.
    pub fn desk() -> Self {
        let carrier_hz = 2.4e9;
        let lambda = SPEED_OF_LIGHT / carrier_hz;
        Self {
            carrier_hz,
            total_subcarriers: 16,
            subcarrier_spacing_hz: 180e3,
            paths: 6,
            speed_kmh: 60.0,
            sample_interval_s: 5e-4,
            geometry: ArrayGeometry::half_wavelength(2, 2, lambda),
            rms_delay_spread_s: 300e-9,
            max_delay_s: 1e-6,
            rician_k: None,
        }
    }

    /// Full-size layout: 32 elements (dual polarisation folded into the
    /// element count) and 96 subcarriers over 17.28 MHz.
    pub fn paper() -> Self {
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        Self {
            total_subcarriers: 96,
            geometry: ArrayGeometry::half_wavelength(4, 8, lambda),
            paths: 12,
            ..Self::desk()
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Subcarriers per direction.
    pub fn band_width(&self) -> usize {
        self.total_subcarriers / 2
    }

    /// `f_k = f_c + (k − K_total/2)·spacing`
    pub fn subcarrier_hz(&self, k: usize) -> f64 {
        self.carrier_hz
            + (k as f64 - (self.total_subcarriers / 2) as f64) * self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) {
            return Err(Error::field("carrier_hz", "must be positive"));
        }
        if self.total_subcarriers == 0 || !self.total_subcarriers.is_multiple_of(2) {
            return Err(Error::field(
                "total_subcarriers",
                "must be a positive even number",
            ));
        }
        if !(self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::field("subcarrier_spacing_hz", "must be positive"));
        }
        if self.paths == 0 {
            return Err(Error::field("paths", "must be at least 1"));
        }
        if !(self.speed_kmh >= 0.0) {
            return Err(Error::field("speed_kmh", "must be non-negative"));
        }
        if !(self.sample_interval_s > 0.0) {
            return Err(Error::field("sample_interval_s", "must be positive"));
        }
        if !(self.rms_delay_spread_s > 0.0) {
            return Err(Error::field("rms_delay_spread_s", "must be positive"));
        }
        if !(self.max_delay_s >= 0.0) {
            return Err(Error::field("max_delay_s", "must be non-negative"));
        }
        if let Some(k) = self.rician_k {
            if !(k >= 0.0) {
                return Err(Error::field("rician_k", "must be non-negative"));
            }
        }
        self.geometry.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ChannelConfig::desk().validate().unwrap();
        ChannelConfig::paper().validate().unwrap();
        assert_eq!(ChannelConfig::paper().geometry.antennas(), 32);
        assert_eq!(ChannelConfig::desk().band_width(), 8);
    }

    #[test]
    fn odd_subcarrier_count_rejected() {
        let mut c = ChannelConfig::desk();
        c.total_subcarriers = 15;
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("total_subcarriers"));
    }

    #[test]
    fn missing_json_field_is_named() {
        let mut v = serde_json::to_value(ChannelConfig::desk()).unwrap();
        v.as_object_mut().unwrap().remove("paths");
        let err = serde_json::from_value::<ChannelConfig>(v)
            .unwrap_err()
            .to_string();
        assert!(err.contains("paths"), "{err}");
    }

    #[test]
    fn subcarriers_centred_on_carrier() {
        let c = ChannelConfig::desk();
        assert_eq!(c.subcarrier_hz(8), c.carrier_hz);
        assert!((c.subcarrier_hz(9) - c.subcarrier_hz(8) - 180e3).abs() < 1e-3);
    }
}
