//! Transformer-based physics-informed neural networks.
//!
//! Points `[x, t]` are extended into short pseudo sequences
//! `[x, t + jΔt]`, embedded, passed through an encoder-decoder with
//! wavelet activations, and trained with a sequential physics loss. The
//! crate also ships the pointwise baselines (MLP, first-layer-sine, QRes),
//! the convection, reaction, wave and Navier-Stokes problems, NTK loss
//! balancing, Adam and L-BFGS, and Hessian-based loss-landscape analysis.
//!
//! Batched evaluations run on rayon when the `parallel` feature is on (the
//! default). Work is split into fixed chunks and reduced in order, so the
//! sequential and parallel paths give identical bits.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod params;
pub mod pde;

pub use error::{Error, Result};
pub use exec::Execution;
pub use pinnsformer_autodiff as autodiff;
