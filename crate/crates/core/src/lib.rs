//! Crowd density estimation with contextual multi-head attention.
//!
//! A self-contained, CPU-only implementation: a small `f64` tensor engine
//! with reverse-mode autodiff, the crowd transformer network (local
//! convolutional features + attention-based non-local features + density
//! prediction head), the annotation-to-density data pipeline, tiled
//! inference, and MAE/RMSE evaluation with k-fold bookkeeping.

pub mod adam;
pub mod attention;
pub mod autograd;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod density;
pub mod engine;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod image;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod params;
pub mod reference;
pub mod tensor;
pub mod tiling;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
