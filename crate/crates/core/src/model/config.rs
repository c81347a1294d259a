use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::conv_out_len;

/// Architecture hyperparameters shared by encoder, decoder and motion model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// (height, width) of preprocessed frames.
    pub input_size: (usize, usize),
    /// Input frames per sample.
    pub k: usize,
    pub encoder_blocks: usize,
    #[serde(default = "defaults::base_channels")]
    pub base_channels: usize,
    #[serde(default = "defaults::latent_channels")]
    pub latent_channels: usize,
    #[serde(default = "defaults::t_offset")]
    pub t_offset: usize,
    #[serde(default = "defaults::motion_blocks")]
    pub motion_blocks: usize,
    #[serde(default = "defaults::leaky_slope")]
    pub leaky_slope: f64,
}

mod defaults {
    pub fn base_channels() -> usize {
        32
    }
    pub fn latent_channels() -> usize {
        128
    }
    pub fn t_offset() -> usize {
        6
    }
    pub fn motion_blocks() -> usize {
        3
    }
    pub fn leaky_slope() -> f64 {
        0.2
    }
}

/// Named presets: the four benchmark layouts plus the moving-object setup.
pub const PRESETS: &[&str] = &["ucsd_ped1", "ucsd_ped2", "avenue", "shanghaitech", "moving_mnist"];

impl ModelConfig {
    fn with(input_size: (usize, usize), k: usize, encoder_blocks: usize) -> Self {
        Self {
            input_size,
            k,
            encoder_blocks,
            base_channels: defaults::base_channels(),
            latent_channels: defaults::latent_channels(),
            t_offset: defaults::t_offset(),
            motion_blocks: defaults::motion_blocks(),
            leaky_slope: defaults::leaky_slope(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "ucsd_ped1" => Self::with((128, 192), 8, 5),
            "ucsd_ped2" => Self::with((128, 192), 8, 4),
            "avenue" | "shanghaitech" => Self::with((128, 224), 6, 4),
            "moving_mnist" => Self {
                base_channels: 16,
                latent_channels: 64,
                ..Self::with((64, 64), 6, 3)
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {PRESETS:?}"
                )))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        let fail = |m: String| Err(Error::Config(m));
        if self.encoder_blocks == 0 {
            return fail("encoder_blocks must be at least 1".into());
        }
        let div = 1usize << self.encoder_blocks;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            return fail(format!(
                "input size {h}x{w} must be divisible by 2^encoder_blocks = {div}"
            ));
        }
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.base_channels == 0 || self.latent_channels == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.motion_blocks == 0 {
            return fail("motion_blocks must be at least 1".into());
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky_slope must lie in [0, 1), got {}", self.leaky_slope));
        }
        Ok(())
    }

    /// Output channels of encoder level `l` (1-based); level 0 is the decoder's stem width.
    pub fn level_channels(&self, level: usize) -> usize {
        if level == 0 {
            self.base_channels.min(self.latent_channels)
        } else if level == self.encoder_blocks {
            self.latent_channels
        } else {
            (self.base_channels << (level - 1)).min(self.latent_channels)
        }
    }

    pub fn level_size(&self, level: usize) -> (usize, usize) {
        (self.input_size.0 >> level, self.input_size.1 >> level)
    }

    /// `[C, H / 2^B, W / 2^B]`.
    pub fn latent_shape(&self) -> [usize; 3] {
        let (h, w) = self.level_size(self.encoder_blocks);
        [self.latent_channels, h, w]
    }

    pub fn frame_shape(&self) -> [usize; 3] {
        [3, self.input_size.0, self.input_size.1]
    }

    /// Temporal extent after each motion block (3-tap, stride 2, padding 1).
    pub fn motion_temporal_sizes(&self) -> Vec<usize> {
        let mut len = self.k;
        (0..self.motion_blocks)
            .map(|_| {
                len = conv_out_len(len, 3, 2, 1);
                len
            })
            .collect()
    }

    /// Index offset of the first frame that receives a score.
    pub fn frame_offset(&self) -> usize {
        self.k - 1 + self.t_offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_latent_shapes() {
        let p1 = ModelConfig::preset("ucsd_ped1").unwrap();
        assert_eq!((p1.input_size, p1.k, p1.encoder_blocks), ((128, 192), 8, 5));
        assert_eq!(p1.latent_shape(), [128, 4, 6]);
        let p2 = ModelConfig::preset("ucsd_ped2").unwrap();
        assert_eq!(p2.latent_shape(), [128, 8, 12]);
        let av = ModelConfig::preset("avenue").unwrap();
        assert_eq!((av.input_size, av.k, av.encoder_blocks), ((128, 224), 6, 4));
        assert_eq!(av.latent_shape(), [128, 8, 14]);
        assert!(ModelConfig::preset("nope").is_err());
    }

    #[test]
    fn temporal_collapse() {
        let mut c = ModelConfig::preset("ucsd_ped2").unwrap();
        assert_eq!(c.motion_temporal_sizes(), vec![4, 2, 1]);
        c.k = 6;
        assert_eq!(c.motion_temporal_sizes(), vec![3, 2, 1]);
        // floor((L + 2 - 3) / 2) + 1
        for l in 1..20 {
            c.k = l;
            assert_eq!(c.motion_temporal_sizes()[0], (l - 1) / 2 + 1);
        }
    }

    #[test]
    fn channel_schedule_doubles_then_caps() {
        let c = ModelConfig::preset("ucsd_ped1").unwrap();
        let chans: Vec<usize> = (0..=5).map(|l| c.level_channels(l)).collect();
        assert_eq!(chans, vec![32, 32, 64, 128, 128, 128]);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::preset("avenue").unwrap();
        assert!(c.validate().is_ok());
        c.input_size = (100, 224);
        assert!(c.validate().is_err());
        c.input_size = (128, 224);
        c.k = 1;
        assert!(c.validate().is_err());
    }
}
