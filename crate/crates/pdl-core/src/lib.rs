//! Decidability-driven deep metric learning at desk scale.
//!
//! The crate trains small embedding networks together with learnable class
//! proxies by optimizing the statistical separability (the decidability
//! index d') of genuine vs impostor similarity distributions, and provides
//! the tooling to audit the resulting embedding spaces: d', genuine/impostor
//! histograms, and Recall@K.
//!
//! Main pieces:
//!
//! - [`tape`] — a minimal reverse-mode differentiation engine over dense
//!   f64 arrays, with finite-difference verification in [`fdcheck`].
//! - [`mlp`] — a small MLP backbone whose output rows are L2-normalized.
//! - [`proxy`] — the bank of learnable class proxies and its two
//!   initialization strategies.
//! - [`losses`] — the proxy-decidability loss plus the D-Loss, ProxyNCA and
//!   triplet baselines.
//! - [`stats`] — non-differentiable evaluation: d', score distributions,
//!   histograms, Recall@K.
//! - [`optim`], [`sampler`], [`train`] — AdamW with decoupled weight decay,
//!   cosine annealing, gradient clipping, batch sampling, and the joint
//!   backbone+proxy training loop.
//! - [`data`] — synthetic spherical-cluster datasets and stratified splits.
//!
//! The crate is `no_std` compatible (alloc required); all file formats and
//! IO live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod fdcheck;
mod fmath;
pub mod gradcheck;
pub mod losses;
pub mod mlp;
pub mod optim;
pub mod proxy;
pub mod sampler;
pub mod stats;
mod sums;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Guard used when dividing by row norms; rows shorter than this keep their
/// scale instead of being blown up to unit length.
pub const NORM_EPS: f64 = 1e-12;
