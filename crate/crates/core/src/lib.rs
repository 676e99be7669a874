//! Round-based "recurrent expansion" training.
//!
//! A base model is trained on raw data; every later round compresses the
//! previous round's internal feature maps and predictions (per-source PCA
//! plus AULC-aware weighting), appends them to the raw inputs, and trains
//! a fresh model on the expanded matrix. Multiverse variants keep several
//! peer models per round — homogeneous, heterogeneous, or heterogeneous
//! with budgeted per-round selection — and fuse all their traces.
//!
//! Crate layout:
//!
//! - [`linalg`]: dense matrices, symmetric eigendecomposition, seeded RNG
//! - [`nn`]: the four model families, backprop, full-batch training
//! - [`metrics`]: AULC, MSE, and the rising-error (glitch) detector
//! - [`imt`]: trace bundles and the PCA + weighting fusion transform
//! - [`engine`]: the round loop for all four modes
//! - [`data`]: the sine benchmark generator and text persistence

pub mod data;
pub mod engine;
mod error;
pub mod imt;
pub mod linalg;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
