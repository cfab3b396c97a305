//! Deterministic simulator for sparse federated learning with
//! saliency-selected masks.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for callers that don't care.

pub mod comm;
pub mod data;
mod error;
pub mod fl;
pub mod mask;
pub mod nn;
mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ParamVector64 = nn::ParamVector<f64>;
pub type ParamVector32 = nn::ParamVector<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type SaliencyVector64 = mask::SaliencyVector<f64>;
pub type SaliencyVector32 = mask::SaliencyVector<f32>;
pub type RunOutput64 = fl::RunOutput<f64>;
pub type RunOutput32 = fl::RunOutput<f32>;
