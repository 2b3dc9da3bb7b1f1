use serde::{Deserialize, Serialize};

use super::slicing::Mode;
use crate::error::{Error, Result};
use crate::model::Ablation;

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub epochs_start: usize,
    pub lr_end: f64,
    pub epochs_end: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Training inputs get AWGN at an SNR drawn uniformly from this range.
    #[serde(default = "default_true")]
    pub inject_noise: bool,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub mode: Mode,
    pub seed: u64,
    pub ablation: Ablation,
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            batch_size: 32,
            epochs: 40,
            lr_start: 1e-3,
            epochs_start: 30,
            lr_end: 1e-4,
            epochs_end: 10,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            inject_noise: true,
            snr_min_db: 5.0,
            snr_max_db: 20.0,
            mode: Mode::Tdd,
            seed: 0,
            ablation: Ablation::None,
        }
    }

    pub fn paper() -> Self {
        Self {
            batch_size: 256,
            epochs: 300,
            epochs_start: 200,
            epochs_end: 100,
            ..Self::desk()
        }
    }

    /// Keeps the two-stage ratio while changing the epoch count.
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        let start = (epochs * self.epochs_start)
            .div_ceil(self.epochs.max(1))
            .min(epochs);
        self.epochs = epochs;
        self.epochs_start = start;
        self.epochs_end = epochs - start;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::field("batch_size", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::field("epochs", "must be positive"));
        }
        if self.epochs_start + self.epochs_end != self.epochs {
            return Err(Error::field(
                "epochs",
                format!(
                    "epochs_start + epochs_end = {} but epochs = {}",
                    self.epochs_start + self.epochs_end,
                    self.epochs
                ),
            ));
        }
        for (name, lr) in [("lr_start", self.lr_start), ("lr_end", self.lr_end)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::field(name, "must be positive"));
            }
        }
        if !(self.snr_min_db <= self.snr_max_db) {
            return Err(Error::field("snr_min_db", "must not exceed snr_max_db"));
        }
        Ok(())
    }
}

/// `lr_start` for the first `epochs_start` epochs, `lr_end` afterwards.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::field(
            "epoch",
            format!("{epoch} outside 0..{}", cfg.epochs),
        ));
    }
    Ok(if epoch < cfg.epochs_start {
        cfg.lr_start
    } else {
        cfg.lr_end
    })
}
