//! Stochastic block models for directed multiplex networks.
//!
//! A multiplex network is a set of `K` directed binary graphs over one common
//! node set. For every ordered pair of distinct nodes the joint edge pattern
//! across the layers is one of `2^K` edge *words*, and the model families here
//! place distributions on those words:
//!
//! - [`er`]: a multiplex Erdős–Rényi baseline where every pair draws its word
//!   from one shared distribution, with a closed-form estimator and a
//!   multinomial-logit extension for pair covariates.
//! - [`vem`]: a multiplex stochastic block model fitted by variational EM,
//!   with a mean-field posterior over latent block labels.
//! - [`selection`]: ICL-penalized selection of the number of blocks.
//! - [`oracle`]: exact enumeration of the marginal likelihood and posterior on
//!   small instances, used to validate the variational machinery.
//! - [`simulate`]: seeded, reproducible samplers for both model families.
//! - [`lab`]: scripted consistency experiments (estimation error versus `n`).
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature enables wall-clock timing of fits and native float math.

#![cfg_attr(not(feature = "std"), no_std)]
// Row-major index arithmetic across several arrays at once reads better as
// plain index loops here.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod align;
pub mod er;
mod error;
pub mod graph;
pub mod lab;
mod linalg;
mod math;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod selection;
pub mod simulate;
pub mod vem;

pub use error::{Error, Result};
