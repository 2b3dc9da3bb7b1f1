use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::ScanOptions;

/// Architecture variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Skip the SE-ResNet feature extractor.
    NoSe,
    /// Skip the patch projection.
    NoPatch,
    /// Replace the Mamba stack with self-attention blocks.
    #[serde(alias = "attention")]
    AttentionBackbone,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "no_se" => Ok(Self::NoSe),
            "no_patch" => Ok(Self::NoPatch),
            "attention" | "attention_backbone" => Ok(Self::AttentionBackbone),
            other => Err(Error::field(
                "ablation",
                format!("unknown variant `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::NoSe => "no_se",
            Self::NoPatch => "no_patch",
            Self::AttentionBackbone => "attention",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input frames `L`.
    pub history: usize,
    /// Predicted frames `P`.
    pub horizon: usize,
    /// Subcarriers per direction `K`; the real feature width is `2K`.
    pub subcarriers: usize,
    pub patch_size: usize,
    pub conv_channels: usize,
    pub res_blocks: usize,
    pub se_reduction: usize,
    pub d_model: usize,
    pub mamba_layers: usize,
    pub d_state: usize,
    pub d_conv: usize,
    pub expand: usize,
    pub dropout: f64,
    pub ablation: Ablation,
    pub attention_heads: usize,
    pub layer_norm_eps: f64,
    pub scan: ScanOptions,
    /// Include the per-channel direct feedthrough `D`.
    pub d_skip: bool,
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            history: 16,
            horizon: 4,
            subcarriers: 8,
            patch_size: 4,
            conv_channels: 16,
            res_blocks: 2,
            se_reduction: 4,
            d_model: 64,
            mamba_layers: 2,
            d_state: 4,
            d_conv: 4,
            expand: 2,
            dropout: 0.1,
            ablation: Ablation::None,
            attention_heads: 4,
            layer_norm_eps: 1e-5,
            scan: ScanOptions::default(),
            d_skip: true,
        }
    }

    pub fn paper() -> Self {
        Self {
            subcarriers: 48,
            conv_channels: 64,
            res_blocks: 4,
            se_reduction: 16,
            d_model: 768,
            mamba_layers: 6,
            ..Self::desk()
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    /// Real feature width `D = 2K`.
    pub fn features(&self) -> usize {
        2 * self.subcarriers
    }

    /// Expanded width `E = d_model · expand`.
    pub fn inner(&self) -> usize {
        self.d_model * self.expand
    }

    /// Number of patches `⌈L / N_p⌉`.
    pub fn patches(&self) -> usize {
        self.history.div_ceil(self.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("history", self.history),
            ("horizon", self.horizon),
            ("subcarriers", self.subcarriers),
            ("patch_size", self.patch_size),
            ("conv_channels", self.conv_channels),
            ("res_blocks", self.res_blocks),
            ("se_reduction", self.se_reduction),
            ("d_model", self.d_model),
            ("mamba_layers", self.mamba_layers),
            ("d_state", self.d_state),
            ("d_conv", self.d_conv),
            ("expand", self.expand),
            ("attention_heads", self.attention_heads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::field(name, "must be positive"));
            }
        }
        if !self.conv_channels.is_multiple_of(self.se_reduction) {
            return Err(Error::field("se_reduction", "must divide conv_channels"));
        }
        if self.ablation == Ablation::AttentionBackbone
            && !self.d_model.is_multiple_of(self.attention_heads)
        {
            return Err(Error::field("attention_heads", "must divide d_model"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::field("dropout", "must lie in [0, 1)"));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::field("layer_norm_eps", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_valid() {
        ModelConfig::desk().validate().unwrap();
        ModelConfig::paper().validate().unwrap();
        assert_eq!(ModelConfig::desk().features(), 16);
        assert_eq!(ModelConfig::desk().patches(), 4);
    }

    #[test]
    fn reduction_must_divide_channels() {
        let c = ModelConfig {
            se_reduction: 3,
            ..ModelConfig::desk()
        };
        assert!(c
            .validate()
            .unwrap_err()
            .to_string()
            .contains("se_reduction"));
    }

    #[test]
    fn ablation_names() {
        for a in [
            Ablation::None,
            Ablation::NoSe,
            Ablation::NoPatch,
            Ablation::AttentionBackbone,
        ] {
            assert_eq!(a.to_string().parse::<Ablation>().unwrap(), a);
        }
        let a: Ablation = serde_json::from_str("\"attention\"").unwrap();
        assert_eq!(a, Ablation::AttentionBackbone);
    }
}
