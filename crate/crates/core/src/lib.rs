//! Movable-antenna spatial-modulation MIMO toolkit.
//!
//! The crate models a point-to-point link whose transmit and receive antennas
//! slide along one-dimensional regions. It jointly designs a diagonal transmit
//! precoder and the antenna positions so that the minimum pairwise distance
//! between received spatial-modulation symbols is as large as possible, and it
//! measures the resulting bit-error rate by Monte Carlo simulation.
//!
//! Module map:
//!
//! - [`channel`]: field-response vectors, channel assembly and random channels.
//! - [`codebook`]: spatial-modulation symbols, bit labels and difference pairs.
//! - [`metrics`]: minimum distance, Gaussian tail and the union error bound.
//! - [`beamforming`]: precoder update by successive convex approximation.
//! - [`position`]: single-antenna position update with concave surrogates.
//! - [`ao`]: the alternating optimization loop.
//! - [`ber`]: maximum-likelihood detection and bit-error simulation.
//! - [`baselines`]: fixed-position, greedy-selection and one-sided schemes.
//! - [`experiment`]: seeded sweeps and their CSV/JSON outputs.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao;
pub mod baselines;
pub mod beamforming;
pub mod ber;
pub mod channel;
pub mod codebook;
pub mod config;
mod error;
pub mod experiment;
pub mod metrics;
pub mod position;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMat = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<Complex64>;
