//! Raw frames to background-subtracted tensors and windowed samples, plus
//! synthetic moving-object videos and photometric distortions.

mod distort;
mod frame;
mod glyphs;
pub mod io;
mod samples;
mod synthetic;

pub use distort::{distort, gaussian_blur, DistortionSpec, RainLevel, RainParams};
pub use frame::{
    compute_background, preprocess, BackgroundAccumulator, BackgroundModel, FloatImage, FrameTensor,
};
pub use glyphs::render_glyph;
pub use samples::{make_samples, sample_count, subsample, SequenceSample};
pub use synthetic::{
    bounce_step, generate_moving_objects, generate_scenario, Direction, NormalSet, ObjectKind, Switch,
    SyntheticSpec, SyntheticVideo,
};
