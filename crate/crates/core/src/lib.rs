//! Single-channel Raman spectrum unmixing.
//!
//! This crate holds the allocation-only algorithmic core:
//!
//! * [`autograd`]: a small reverse-mode differentiation engine over dense
//!   tensors, with exactly the primitives the separation network uses and a
//!   central finite-difference checker.
//! * [`data`]: spectrum normalisation, resampling, and seeded synthesis of
//!   noisy two-component mixtures.
//! * [`model`]: the dual-path separation network (encoder, chunking,
//!   top-down-attention blocks, overlap-add, mask net, decoder).
//! * [`train`]: permutation-invariant SI-SNR loss, Adam, gradient clipping and
//!   an in-memory epoch driver.
//! * [`metrics`]: SI-SNR, SI-SNRi, SID, SAD, RMSE and score reports.
//! * [`sparse`]: dictionary-based baselines (ADMM-based sparse unmixing and
//!   nonnegative orthogonal matching pursuit).
//!
//! File formats, checkpoints and the command-line front end live in the
//! `rssnet` companion crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the tensor layout in the numeric kernels
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod autograd;
pub mod data;
pub mod metrics;
pub mod model;
pub mod sparse;
pub mod train;

mod error;
mod seed;

pub use error::{Error, Result};
pub use seed::derive_seed;
