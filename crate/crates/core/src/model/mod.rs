//! The CPMamba network.
//!
//! ```text
//! x[B, L, D] → normalize → patch → SE-ResNet on [B, 2, L, K] → embed
//!            → residual Mamba stack → FC over features → FC over time
//!            → σ·y + μ → [B, P, D]
//! ```
//!
//! Parameters live in a [`ModelState`] keyed by stable path strings; a
//! forward pass binds them onto a [`Tape`](crate::numerics::Tape).

mod config;
mod network;
mod state;

pub use config::{Ablation, ModelConfig};
pub use network::{
    attention_backbone, denormalize, forward, normalize, patch_embed, prediction_head,
    reshape_input, restore_output, rmamba_stack, se_block, se_resnet, self_attention, Affine,
    AttentionLayer, ConvWeights, DropoutCtx, HeadWeights, MambaLayer, NormStats, NormWeights,
    ResBlockWeights, SeResNetWeights, SeWeights, Weights, NORM_EPS,
};
pub use state::{
    param_specs, Bound, Init, ModelState, ParamSpec, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
