pub mod archive;
pub mod autodiff;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod encoders;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod metrics;
pub mod params;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
