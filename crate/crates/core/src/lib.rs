//! CSI prediction with selective state-space models.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: `f64` tensors, a reverse-mode tape, the network primitives,
//!   Adam and finite-difference gradient checks.
//! - [`channel`]: a multipath MIMO-OFDM channel simulator and the `CSID`
//!   dataset format.
//! - [`ssm`]: zero-order-hold discretisation, the selective scan and the
//!   Mamba block.
//! - [`model`]: the CPMamba network, its ablations and checkpoints.
//! - [`train`]: metrics, TDD/FDD slicing, baselines, training and sweeps.
//! - [`bench`]: sequence-length scaling measurements.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod channel;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod rng;
pub mod ssm;
pub mod train;

mod error;

pub use error::{Error, Result};

// The book's Rust snippets run as doctests through these modules, one per
// chapter so a failure points at its source file.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/selective-scan.md")]
    mod selective_scan {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
