//! Superposed square-root model of river water quality driven by a
//! jump-driven supOU discharge process.
//!
//! The crate is `no_std` (with `alloc`) and carries every algorithmic piece
//! of the engine:
//!
//! - [`measures`]: gamma, Dirac and equal-weight empirical mixing measures,
//!   their quantile discretization and Laplace transforms.
//! - [`ig`]: inverse-Gaussian sampling, the one-step inverse-Gaussian scheme
//!   for square-root processes, and the single-process validation suite.
//! - [`discharge`]: closed-form cumulants and autocorrelation of the supOU
//!   discharge, and its finite-dimensional path generator.
//! - [`memory`]: the finite-dimensional superposed memory process, the
//!   log-sinusoid seasonal factor and the coupled (Q, M, C) simulator.
//! - [`stats`]: closed-form variance, autocorrelation and mutual covariance
//!   of the memory process, misspecification divergence, and empirical
//!   estimators.
//! - [`calibrate`]: the identification pipeline from discharge and
//!   water-quality series.
//! - [`riccati`]: the finite-dimensional generalized Riccati system used as
//!   an independent route to the moment-generating function.
//!
//! IO, configuration and the command line live in the `cqflow` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod calibrate;
pub mod discharge;
pub mod error;
pub mod ig;
pub mod linalg;
pub mod measures;
pub mod memory;
pub mod optim;
pub mod path;
pub mod quad;
pub mod riccati;
pub mod rng;
pub mod special;
pub mod stats;
pub mod sum;

pub use error::{Error, Result};
pub use measures::MixingMeasure;
pub use path::SamplePath;
pub use rng::RngStream;
