//! Dense `f64` tensors with a reverse-mode gradient tape.
//!
//! Values live in [`Tensor`]s; a computation is recorded by placing tensors
//! on a [`Tape`] and combining the resulting [`Var`] handles with the
//! primitives re-exported here. [`Tape::backward`] then sweeps the tape once
//! in reverse and returns the gradients of every trainable leaf.

mod adam;
mod conv;
pub mod gradcheck;
mod linalg;
mod norm;
pub mod ops;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use conv::{causal_conv1d, conv2d_3x3, pool_global, PoolKind};
pub use gradcheck::{
    central_difference, grad_check, relative_error, GradCheckConfig, GradCheckReport,
};
pub use linalg::{linear, matmul};
pub use norm::layer_norm;
pub use ops::{
    add, affine, apply_unary, dropout, mul, narrow, pad_tail, permute, relu, reshape, scale,
    sigmoid, silu, softmax, softplus, sub, sum, transpose_last, UnaryKind,
};
pub use tape::{Backward, GradCtx, Gradients, Tape, Var};
pub use tensor::{numel, Tensor};
