//! Appearance autoencoder with previous-frame shortcuts and the Conv3D
//! latent-code predictor.

pub mod checkpoint;
mod config;
pub mod decoder;
pub mod encoder;
pub mod motion;
pub mod unit;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ModelConfig, PRESETS};
pub use decoder::Decoder;
pub use encoder::Encoder;
pub use motion::MotionModel;
pub use unit::Norm;

use crate::data::FrameTensor;
use crate::error::{Error, Result};
use crate::nn::param::join;
use crate::nn::{Param, Parameterized, Tensor};

/// Encoder output for one frame, `[C, H / 2^B, W / 2^B]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub values: Tensor,
}

impl LatentCode {
    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.data()
    }
}

/// Encoder block outputs for one frame; `levels[l - 1]` is level `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

/// Encoder, decoder and motion model with their configuration.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub motion: MotionModel,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(&config, &mut rng);
        let decoder = Decoder::new(&config, &mut rng);
        let motion = MotionModel::new(&config, &mut rng);
        Ok(Self {
            config,
            encoder,
            decoder,
            motion,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn check_frame(&self, shape: &[usize]) -> Result<()> {
        let want = self.config.frame_shape();
        if shape != want {
            return Err(Error::shape(&want, shape));
        }
        Ok(())
    }

    fn check_latent(&self, shape: &[usize]) -> Result<()> {
        let want = self.config.latent_shape();
        if shape != want {
            return Err(Error::shape(&want, shape));
        }
        Ok(())
    }

    /// Inference-mode encoding of a batch `[N, 3, H, W]` into pyramid levels.
    pub fn encode_batch(&self, frames: &Tensor) -> Result<Vec<Tensor>> {
        if frames.shape().len() != 4 {
            return Err(Error::shape(&[0, 3, 0, 0], frames.shape()));
        }
        self.check_frame(&frames.shape()[1..])?;
        Ok(self.encoder.infer(frames, Norm::Running))
    }

    pub fn encode_pixels(&self, pixels: &Tensor) -> Result<(LatentCode, FeaturePyramid)> {
        self.check_frame(pixels.shape())?;
        let batch = pixels.clone().reshape(&[1, 3, self.config.input_size.0, self.config.input_size.1]);
        let levels: Vec<Tensor> = self
            .encoder
            .infer(&batch, Norm::Running)
            .into_iter()
            .map(|l| l.unstack(0))
            .collect();
        let latent = LatentCode {
            values: levels.last().expect("at least one level").clone(),
        };
        Ok((latent, FeaturePyramid { levels }))
    }

    pub fn encode(&self, frame: &FrameTensor) -> Result<(LatentCode, FeaturePyramid)> {
        self.encode_pixels(&frame.pixels)
    }

    /// Reconstructs frame `q` from its latent and frame `q − 1`'s pyramid.
    pub fn decode(&self, latent: &LatentCode, prev: &FeaturePyramid) -> Result<Tensor> {
        self.check_latent(latent.shape())?;
        if prev.levels.len() != self.config.encoder_blocks {
            return Err(Error::Invalid(format!(
                "pyramid has {} levels, model has {}",
                prev.levels.len(),
                self.config.encoder_blocks
            )));
        }
        let mut batched = Vec::with_capacity(prev.levels.len());
        for (i, lvl) in prev.levels.iter().enumerate() {
            let (h, w) = self.config.level_size(i + 1);
            let want = [self.config.level_channels(i + 1), h, w];
            if lvl.shape() != want {
                return Err(Error::shape(&want, lvl.shape()));
            }
            batched.push(Tensor::stack(&[lvl]));
        }
        let z = Tensor::stack(&[&latent.values]);
        Ok(self.decoder.infer(&z, &batched, Norm::Running).unstack(0))
    }

    /// Predicts the code `t_offset` steps after the last of `codes` (oldest first).
    pub fn predict_latent(&self, codes: &[&LatentCode]) -> Result<LatentCode> {
        if codes.len() != self.config.k {
            return Err(Error::Invalid(format!(
                "motion model expects {} codes, got {}",
                self.config.k,
                codes.len()
            )));
        }
        for c in codes {
            self.check_latent(c.shape())?;
        }
        let flat = Tensor::stack(&codes.iter().map(|c| &c.values).collect::<Vec<_>>());
        let stack = motion::stack_time(&flat, self.config.k);
        Ok(LatentCode {
            values: self.motion.infer(&stack, Norm::Running).unstack(0),
        })
    }

    /// Batched prediction: `latents` is `[S·k, C, h, w]`, sequence-major.
    pub fn predict_batch(&self, latents: &Tensor) -> Tensor {
        let stack = motion::stack_time(latents, self.config.k);
        self.motion.infer(&stack, Norm::Running)
    }
}

impl Parameterized for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.motion.visit(&join(prefix, "motion"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.motion.visit_mut(&join(prefix, "motion"), f);
    }
}
