//! Losses, metrics, duplex slicing, baselines, training and sweeps.

mod config;
mod eval;
mod metrics;
mod slicing;
mod trainer;

pub use config::{lr_schedule, TrainConfig};
pub use eval::{
    evaluate, parse_grid, Axis, EvalOptions, LinearExtrapolation, MetricsReport, MetricsRow,
    NoPrediction, Predictor, METRICS_HEADER,
};
pub use metrics::{error_metrics, nmse, nmse_loss, nmse_real};
pub use slicing::{baseline_linear, baseline_np, slice_mode, Mode};
pub use trainer::{
    examples, grad_check_model, loss_and_grads, sample_nmse, save_history_csv, train, train_with,
    validation_nmse, write_history_csv, EpochRecord, Example, StepStats, TrainOutcome, Trainer,
    HISTORY_HEADER,
};
