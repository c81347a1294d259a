pub mod error;
pub mod evaluation;
pub mod data;
pub mod model;
pub mod nn;
pub mod scoring;
pub mod streaming;
pub mod training;

pub use error::{Error, Result};
