//! Interactive attention prediction for human-object interactions: data
//! model, encoders, the IA network, training, saliency metrics and HOI
//! attention alignment.

pub mod data;
pub mod encoders;
pub mod error;
pub mod hoi;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{IaError, Result};
pub use scalar::Scalar;

pub type IaModelF32 = model::IaModel<f32>;
pub type IaModelF64 = model::IaModel<f64>;
pub type AttentionMapF32 = data::AttentionMap<f32>;
pub type AttentionMapF64 = data::AttentionMap<f64>;
pub type CheckpointF32 = model::Checkpoint<f32>;
pub type CheckpointF64 = model::Checkpoint<f64>;
pub type TrainerF32 = train::Trainer<f32>;
pub type TrainerF64 = train::Trainer<f64>;
