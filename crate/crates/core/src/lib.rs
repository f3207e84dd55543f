//! One-step, optimum-referenced test-time adaptation of softmax policies.
//!
//! A policy receives scalar feedback on a single sampled response. The
//! KL-regularized optimum for that feedback is a re-weighting of the current
//! policy; the update linearizes the policy around the current parameters and
//! takes a single least-squares step toward the re-weighted target, solving
//! the normal equations matrix-free with conjugate gradient.
//!
//! Modules:
//! - [`policy`]: tabular, linear and one-hidden-layer softmax policies with
//!   analytic Jacobians, JVP/VJP and sampling.
//! - [`target`]: closed-form re-weighted policy, single-sample target and
//!   partition function.
//! - [`solver`]: matrix-free CG on the normal equations plus the rank-one
//!   closed form.
//! - [`engine`]: update mechanisms, per-turn adaptation, sessions and the
//!   single-sample policy-gradient baseline.
//! - [`oracle`]: rule, dense, scripted and interactive feedback.
//! - [`theory`]: KL, bound checks and accuracy / correction-uplift metrics.

#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod oracle;
pub mod policy;
pub mod solver;
pub mod target;
pub mod theory;

pub use error::{Error, Result};
pub use policy::{ParameterVector, PolicyFamily, PolicyModel};
