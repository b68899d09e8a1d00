//! Multi-reference conditional diffusion transformer for content-preserving
//! style transfer, trained with rectified flow matching through LoRA
//! adapters over a staged curriculum, with a procedural image world and a
//! metric suite for evaluation.

pub mod config;
pub mod curriculum;
pub mod dit;
pub mod error;
pub mod flow;
pub mod image;
pub mod lora;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod video;
pub mod world;

pub use error::{Error, Result};
