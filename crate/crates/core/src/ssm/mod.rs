//! Selective state-space machinery.

mod discretize;
mod mamba;
mod scan;

pub use discretize::{
    discretize, discretize_with, zoh_gain, zoh_gain_derivative, Discretization, SERIES_THRESHOLD,
};
pub use mamba::{mamba_block, MambaWeights};
pub use scan::{selective_project, selective_scan, ScanInput, ScanInputs, ScanOptions, SsmParams};
