pub mod cli;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod padding;
pub mod pipeline;
mod serde_inf;
pub mod synth;
pub mod tensor;
pub mod tiling;
pub mod training;

pub use error::{Error, Result};
