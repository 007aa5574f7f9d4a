pub mod attention;
pub mod audio;
pub mod cli;
pub mod conditioning;
pub mod diffusion;
pub mod io;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rhythm;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
