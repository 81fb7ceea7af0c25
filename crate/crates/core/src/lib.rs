//! Test-time privacy for small softmax classifiers.
//!
//! The crate finetunes a pretrained model so that a designated forget set
//! receives near-uniform predictions while accuracy elsewhere is kept, and
//! offers certified variants that release a noised Newton step together with
//! an (ε, δ) certificate. It also carries the confidence attacks used to probe
//! such models and closed-form bound calculators.
//!
//! The crate is `no_std` with `alloc` when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod attacks;
pub mod baselines;
pub mod bounds;
pub mod certify;
pub mod data;
pub mod error;
pub mod estimator;
pub mod finetune;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use loss::LossKind;
pub use model::{Example, ModelSpec, ParamVector};
