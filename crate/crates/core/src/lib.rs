//! A desk-scale machine-unlearning laboratory.
//!
//! Trains small fully connected classifiers, applies RURK and a suite of
//! baseline unlearning methods, and measures residual knowledge: how much more
//! often an unlearned model still recognizes perturbed forget samples than a
//! model re-trained without them. A `theory` module numerically checks the
//! indistinguishability and sphere-concentration results the metrics rest on.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod config;
pub mod datasets;
pub mod error;
pub mod evaluate;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod theory;
pub mod trainer;
pub mod unlearn;

pub use error::{LabError, Result};
