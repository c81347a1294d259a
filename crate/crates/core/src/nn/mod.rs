//! Minimal reverse-mode building blocks: tensors, layers with explicit
//! forward caches and hand-written backward passes, and Adam.

pub mod act;
pub mod adam;
pub mod conv;
pub mod norm;
pub mod ops;
pub mod param;
mod tensor;

pub use adam::Adam;
pub use conv::Conv;
pub use norm::{BatchNorm, BatchNormCache, BatchStats, NormMode};
pub use param::{Param, Parameterized};
pub use tensor::Tensor;
