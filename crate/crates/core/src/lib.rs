//! Conditional potential-outcome distributions from paired CDF networks
//! (CCN) and their balanced variant (FCCN).
//!
//! A [`ccn::CdfModel`] holds one conditional CDF network per treatment arm.
//! Each is trained with a cross-entropy loss on `1{y < z}` at random probe
//! values `z`, so the trained network approximates `Pr(Y(t) < z | x)`.
//! [`fccn`] adds representation heads that balance the arms and expose an
//! estimated propensity. [`scenarios`] generates synthetic data with exact
//! oracles, [`metrics`] and [`utility`] score estimates, and [`harness`]
//! runs replicated experiments.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar type.

// Validation writes `!(x > 0.0)` so NaN is rejected too, and the numeric
// kernels index several parallel slices in one loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ccn;
pub mod data;
pub mod error;
pub mod fccn;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod scenarios;
pub mod utility;

pub use ccn::{train_ccn, Architecture, CdfCurve, TrainConfig, ZSampler};
pub use data::{Arm, Dataset, Standardizer};
pub use error::{CcnError, Result};
pub use fccn::{train_fccn, FccnConfig, RepresentationMode};
pub use scalar::Real;

pub type DenseNet64 = nn::DenseNet<f64>;
pub type DenseNet32 = nn::DenseNet<f32>;
pub type MonotoneNet64 = nn::MonotoneNet<f64>;
pub type CdfModel64 = ccn::CdfModel<f64>;
pub type CdfModel32 = ccn::CdfModel<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
