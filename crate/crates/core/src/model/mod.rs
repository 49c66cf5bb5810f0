//! The interactive attention model and its checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod fourier;
pub mod network;

#[cfg(test)]
mod tests;

pub use checkpoint::{Checkpoint, CheckpointMeta, Moments};
pub use config::{Component, IaConfig};
pub use fourier::fourier_embed;
pub use network::{
    bce_loss, bce_var, Forward, IaModel, KnowledgePrototypes, Mode, SampleFeatures, BCE_EPS,
};
