//! Multimodal representation alignment by maximizing the dominant singular
//! value of each instance's stacked modality embeddings.
//!
//! The numeric core (`linalg`, `losses`, `model`, `metrics`) is generic over
//! [`Real`]; the aliases below fix it to `f64` (the default everywhere in the
//! harness) or `f32`.

pub mod error;
pub mod finite_diff;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type SvdResult = linalg::SvdResult<f64>;
pub type SvdResult32 = linalg::SvdResult<f32>;
