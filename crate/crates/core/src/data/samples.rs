use std::sync::Arc;

use super::FrameTensor;

/// `k` input frames plus the future frame `t_offset` sampled steps after the last input.
#[derive(Clone, Debug)]
pub struct SequenceSample {
    pub inputs: Vec<Arc<FrameTensor>>,
    pub future_target: Arc<FrameTensor>,
    pub t_offset: usize,
    pub stride: usize,
}

impl SequenceSample {
    pub fn k(&self) -> usize {
        self.inputs.len()
    }

    /// Frames `T_2 … T_k`, the reconstruction targets.
    pub fn recon_targets(&self) -> &[Arc<FrameTensor>] {
        &self.inputs[1..]
    }

    /// Source-video index of the predicted frame.
    pub fn target_index(&self) -> usize {
        self.future_target.frame_index
    }
}

/// Number of samples a video of `sampled_len` sampled frames yields.
pub fn sample_count(sampled_len: usize, k: usize, t_offset: usize) -> usize {
    (sampled_len + 1).saturating_sub(k + t_offset)
}

/// Keeps every `stride`-th frame starting at the first.
pub fn subsample<T: Clone>(video: &[T], stride: usize) -> Vec<T> {
    assert!(stride >= 1, "stride must be at least 1");
    video.iter().step_by(stride).cloned().collect()
}

/// Sliding windows over the `stride`-subsampled video, advancing one sampled frame at a time.
///
/// Too-short videos yield no samples.
pub fn make_samples(
    video: &[Arc<FrameTensor>],
    k: usize,
    t_offset: usize,
    stride: usize,
) -> Vec<SequenceSample> {
    assert!(k >= 2, "k must be at least 2");
    let sampled = subsample(video, stride);
    let n = sample_count(sampled.len(), k, t_offset);
    (0..n)
        .map(|i| SequenceSample {
            inputs: sampled[i..i + k].to_vec(),
            future_target: Arc::clone(&sampled[i + k - 1 + t_offset]),
            t_offset,
            stride,
        })
        .collect()
}
