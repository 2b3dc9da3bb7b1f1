//! Synthetic time-varying MIMO-OFDM channels.
//!
//! A sequence draws `M` paths once and evolves only through their Doppler
//! phases; each frame is the sum of per-path steering vectors weighted by
//! their complex gains and subcarrier-dependent delay phases.

mod config;
mod dataset;
mod geometry;
mod noise;
mod paths;
mod sequence;

pub use config::{kmh_to_mps, ChannelConfig, SPEED_OF_LIGHT};
pub use dataset::{
    build_dataset, speed_grid, CsiDataset, DatasetSpec, Split, CSID_MAGIC, CSID_VERSION,
};
pub use geometry::{steering_vector, ArrayGeometry};
pub use noise::{add_awgn, add_awgn_in_place, Snr};
pub use paths::{doppler_shift, sample_paths, MultipathParams, Path};
pub use sequence::{csi_frame, generate_sequence, CsiSequence};
