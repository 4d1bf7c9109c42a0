//! Diabetic-retinopathy grading core.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod datasets;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod imgio;
pub mod lesions;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synthgen;
pub mod trust;

pub use error::{Error, Result};
