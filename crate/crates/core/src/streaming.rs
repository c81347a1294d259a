//! Online scoring: every arriving frame is encoded once, the last `k` codes
//! are cached, and a frame's score is emitted when the frame itself arrives.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{preprocess, BackgroundModel, FloatImage, FrameTensor};
use crate::error::{Error, Result};
use crate::model::{LatentCode, Model};
use crate::nn::Tensor;
use crate::scoring::{cosine_distance, mse, Metric, TrailingNormalizer};

/// FIFO cache of the most recent `capacity` latent codes.
#[derive(Clone, Debug)]
pub struct LatentRing {
    capacity: usize,
    slots: VecDeque<LatentCode>,
    next_index: usize,
    encode_counter: usize,
}

impl LatentRing {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self {
            capacity,
            slots: VecDeque::with_capacity(capacity),
            next_index: 0,
            encode_counter: 0,
        }
    }

    /// Appends a freshly encoded code, evicting the oldest when full.
    pub fn push(&mut self, code: LatentCode) {
        if self.slots.len() == self.capacity {
            self.slots.pop_front();
        }
        self.slots.push_back(code);
        self.next_index += 1;
        self.encode_counter += 1;
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Arrival index of the next frame.
    pub fn next_index(&self) -> usize {
        self.next_index
    }

    pub fn encode_counter(&self) -> usize {
        self.encode_counter
    }

    /// Codes oldest first.
    pub fn codes(&self) -> Vec<&LatentCode> {
        self.slots.iter().collect()
    }
}

/// Predictions waiting for the frame they target.
#[derive(Clone, Debug, Default)]
pub struct PendingTargets {
    map: BTreeMap<usize, LatentCode>,
}

impl PendingTargets {
    pub fn insert(&mut self, target: usize, prediction: LatentCode) {
        let old = self.map.insert(target, prediction);
        debug_assert!(old.is_none(), "two predictions for frame {target}");
    }

    /// Removes and returns the prediction for `target`.
    pub fn take(&mut self, target: usize) -> Option<LatentCode> {
        self.map.remove(&target)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Drops every outstanding prediction and returns how many there were.
    pub fn expire(&mut self) -> usize {
        let n = self.map.len();
        self.map.clear();
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Encode each frame once and reuse cached codes.
    Cached,
    /// Re-encode the whole `k`-frame window at every step.
    Naive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StreamScore {
    pub frame_index: usize,
    pub raw_score: f64,
    /// Trailing-window normalized score, when enabled.
    pub normalized: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
struct StageTotals {
    preprocess: Duration,
    encode: Duration,
    predict: Duration,
    score: Duration,
}

/// State machine for one stream.
pub struct StreamState<'a> {
    model: &'a Model,
    metric: Metric,
    mode: StreamMode,
    ring: LatentRing,
    pending: PendingTargets,
    /// Raw frames of the current window, used by naive mode only.
    window: VecDeque<Arc<FrameTensor>>,
    normalizer: Option<TrailingNormalizer>,
    naive_encodes: usize,
    stages: StageTotals,
}

impl<'a> StreamState<'a> {
    /// `norm_window` enables trailing-window normalization of emitted scores.
    pub fn new(model: &'a Model, metric: Metric, mode: StreamMode, norm_window: Option<usize>) -> Result<Self> {
        if metric.needs_decoder() {
            return Err(Error::Config(format!(
                "streaming supports latent metrics only, got {metric}"
            )));
        }
        let k = model.config().k;
        Ok(Self {
            model,
            metric,
            mode,
            ring: LatentRing::new(k),
            pending: PendingTargets::default(),
            window: VecDeque::with_capacity(k),
            normalizer: norm_window.map(TrailingNormalizer::new),
            naive_encodes: 0,
            stages: StageTotals::default(),
        })
    }

    pub fn ring(&self) -> &LatentRing {
        &self.ring
    }

    pub fn pending(&self) -> &PendingTargets {
        &self.pending
    }

    /// Total encoder invocations (per frame) so far.
    pub fn encode_counter(&self) -> usize {
        match self.mode {
            StreamMode::Cached => self.ring.encode_counter(),
            StreamMode::Naive => self.naive_encodes,
        }
    }

    /// Preprocesses a raw frame, then pushes it.
    pub fn push_raw(&mut self, raw: &FloatImage, bg: &BackgroundModel, frame_index: usize, video_id: &Arc<str>) -> Result<Option<StreamScore>> {
        let t = Instant::now();
        let frame = preprocess(raw, bg, self.model.config().input_size, frame_index, video_id)?;
        self.stages.preprocess += t.elapsed();
        self.push_frame(Arc::new(frame))
    }

    pub fn push_frame(&mut self, frame: Arc<FrameTensor>) -> Result<Option<StreamScore>> {
        let cfg = self.model.config();
        let (k, t_offset) = (cfg.k, cfg.t_offset);
        if frame.pixels.shape() != cfg.frame_shape() {
            return Err(Error::shape(&cfg.frame_shape(), frame.pixels.shape()));
        }
        let n = self.ring.next_index();

        let t = Instant::now();
        let current = match self.mode {
            StreamMode::Cached => {
                let (z, _) = self.model.encode(&frame)?;
                self.ring.push(z.clone());
                z
            }
            StreamMode::Naive => {
                if self.window.len() == k {
                    self.window.pop_front();
                }
                self.window.push_back(Arc::clone(&frame));
                let frames: Vec<&Tensor> = self.window.iter().map(|f| &f.pixels).collect();
                let latents = self.model.encode_batch(&Tensor::stack(&frames))?.pop().expect("levels");
                self.naive_encodes += frames.len();
                // the ring still tracks arrival order; its codes are replaced wholesale
                self.ring.slots.clear();
                for i in 0..latents.batch() {
                    self.ring.slots.push_back(LatentCode {
                        values: Tensor::from_vec(&latents.shape()[1..], latents.item(i).to_vec()),
                    });
                }
                self.ring.next_index += 1;
                self.ring.slots.back().expect("just pushed").clone()
            }
        };
        self.stages.encode += t.elapsed();

        if self.ring.is_full() {
            let t = Instant::now();
            let pred = self.model.predict_latent(&self.ring.codes())?;
            self.pending.insert(n + t_offset, pred);
            self.stages.predict += t.elapsed();
        }

        let Some(pred) = self.pending.take(n) else {
            return Ok(None);
        };
        let t = Instant::now();
        let raw_score = match self.metric {
            Metric::LatentMse => mse(pred.as_slice(), current.as_slice()),
            _ => cosine_distance(pred.as_slice(), current.as_slice())?,
        };
        let normalized = self.normalizer.as_mut().map(|nz| nz.push(raw_score));
        self.stages.score += t.elapsed();
        debug_assert!(self.pending.len() <= t_offset);
        Ok(Some(StreamScore {
            frame_index: frame.frame_index,
            raw_score,
            normalized,
        }))
    }

    /// Ends the stream; outstanding predictions expire. Returns how many did.
    pub fn finish(&mut self) -> usize {
        self.pending.expire()
    }
}

/// Mean per-frame latency of each stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatencies {
    pub preprocess_ms: f64,
    pub encode_ms: f64,
    pub predict_ms: f64,
    pub score_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub mode: StreamMode,
    /// Timed frames (warmup excluded).
    pub frames: usize,
    pub wall_time_s: f64,
    pub fps: f64,
    pub mean_frame_ms: f64,
    pub stages: StageLatencies,
    /// Encoder invocations per timed frame.
    pub encodes_per_frame: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cached: ThroughputReport,
    pub naive: ThroughputReport,
    /// `cached.fps / naive.fps`.
    pub speedup: f64,
}

fn run_timed(
    model: &Model,
    metric: Metric,
    mode: StreamMode,
    frames: &[FloatImage],
    bg: &BackgroundModel,
    warmup: usize,
) -> Result<ThroughputReport> {
    let mut state = StreamState::new(model, metric, mode, None)?;
    let id: Arc<str> = Arc::from("bench");
    for (i, f) in frames[..warmup].iter().enumerate() {
        state.push_raw(f, bg, i, &id)?;
    }
    state.stages = StageTotals::default();
    let encodes_before = state.encode_counter();
    let start = Instant::now();
    for (i, f) in frames.iter().enumerate().skip(warmup) {
        state.push_raw(f, bg, i, &id)?;
    }
    let wall = start.elapsed().as_secs_f64();
    let n = frames.len() - warmup;
    let per = |d: Duration| d.as_secs_f64() * 1e3 / n as f64;
    Ok(ThroughputReport {
        mode,
        frames: n,
        wall_time_s: wall,
        fps: n as f64 / wall,
        mean_frame_ms: wall * 1e3 / n as f64,
        stages: StageLatencies {
            preprocess_ms: per(state.stages.preprocess),
            encode_ms: per(state.stages.encode),
            predict_ms: per(state.stages.predict),
            score_ms: per(state.stages.score),
        },
        encodes_per_frame: (state.encode_counter() - encodes_before) as f64 / n as f64,
    })
}

/// Steady-state throughput of cached and naive streaming over `frames`.
pub fn benchmark(
    model: &Model,
    metric: Metric,
    frames: &[FloatImage],
    bg: &BackgroundModel,
    warmup: usize,
) -> Result<BenchmarkReport> {
    if frames.len() <= warmup {
        return Err(Error::Invalid(format!(
            "benchmark needs more than {warmup} frames, got {}",
            frames.len()
        )));
    }
    let cached = run_timed(model, metric, StreamMode::Cached, frames, bg, warmup)?;
    let naive = run_timed(model, metric, StreamMode::Naive, frames, bg, warmup)?;
    Ok(BenchmarkReport {
        speedup: cached.fps / naive.fps,
        cached,
        naive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::scoring::score_video;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> ModelConfig {
        ModelConfig {
            input_size: (16, 16),
            k: 3,
            encoder_blocks: 2,
            base_channels: 4,
            latent_channels: 8,
            t_offset: 2,
            motion_blocks: 2,
            leaky_slope: 0.2,
        }
    }

    fn video(n: usize, seed: u64) -> Vec<Arc<FrameTensor>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let id: Arc<str> = Arc::from("s");
        (0..n)
            .map(|i| {
                Arc::new(FrameTensor {
                    pixels: Tensor::from_vec(&[3, 16, 16], (0..768).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                    frame_index: i,
                    video_id: Arc::clone(&id),
                })
            })
            .collect()
    }

    #[test]
    fn first_score_at_frame_offset_and_matches_batch() {
        let model = Model::new(cfg(), 2).unwrap();
        let frames = video(30, 1);
        for metric in [Metric::LatentMse, Metric::LatentCosine] {
            let batch = score_video(&model, &frames, &[metric], 1, None).unwrap().remove(0);
            for mode in [StreamMode::Cached, StreamMode::Naive] {
                let mut st = StreamState::new(&model, metric, mode, None).unwrap();
                let mut emitted = Vec::new();
                for f in &frames {
                    if let Some(s) = st.push_frame(Arc::clone(f)).unwrap() {
                        emitted.push(s);
                    }
                    assert!(st.pending().len() <= 2);
                }
                assert_eq!(emitted[0].frame_index, 3 - 1 + 2);
                assert_eq!(emitted.len(), batch.raw_scores.len());
                for (e, (idx, raw)) in emitted.iter().zip(batch.frame_indices.iter().zip(&batch.raw_scores)) {
                    assert_eq!(e.frame_index, *idx);
                    assert!((e.raw_score - raw).abs() < 1e-9);
                }
                let expect_encodes = match mode {
                    StreamMode::Cached => 30,
                    StreamMode::Naive => 1 + 2 + 3 * 28,
                };
                assert_eq!(st.encode_counter(), expect_encodes);
                assert_eq!(st.finish(), 2);
            }
        }
    }

    #[test]
    fn pixel_metrics_rejected() {
        let model = Model::new(cfg(), 2).unwrap();
        assert!(StreamState::new(&model, Metric::PixelPrediction, StreamMode::Cached, None).is_err());
    }

    #[test]
    fn wrong_frame_shape_is_an_error() {
        let model = Model::new(cfg(), 2).unwrap();
        let mut st = StreamState::new(&model, Metric::LatentMse, StreamMode::Cached, None).unwrap();
        let bad = FrameTensor { pixels: Tensor::zeros(&[3, 8, 8]), frame_index: 0, video_id: Arc::from("x") };
        assert!(matches!(st.push_frame(Arc::new(bad)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn benchmark_accounting() {
        let model = Model::new(cfg(), 2).unwrap();
        let bg = BackgroundModel::zeros(16, 16);
        let frames: Vec<FloatImage> = (0..20).map(|i| FloatImage::filled(16, 16, i as f64 / 20.0)).collect();
        let r = benchmark(&model, Metric::LatentCosine, &frames, &bg, 5).unwrap();
        assert_eq!(r.cached.frames, 15);
        assert_eq!(r.cached.encodes_per_frame, 1.0);
        assert_eq!(r.naive.encodes_per_frame, 3.0);
        for t in [&r.cached, &r.naive] {
            let s = t.stages;
            assert!(s.preprocess_ms + s.encode_ms + s.predict_ms + s.score_ms <= t.mean_frame_ms + 1e-9);
            assert!((t.fps - t.frames as f64 / t.wall_time_s).abs() < 1e-9 * t.fps);
        }
        assert!(benchmark(&model, Metric::LatentCosine, &frames[..5], &bg, 5).is_err());
    }

    proptest! {
        #[test]
        fn ring_is_bounded_fifo(cap in 1usize..8, n in 0usize..40) {
            let mut ring = LatentRing::new(cap);
            for i in 0..n {
                ring.push(LatentCode { values: Tensor::full(&[1, 1, 1], i as f64) });
                prop_assert!(ring.len() <= cap);
            }
            let got: Vec<f64> = ring.codes().iter().map(|c| c.as_slice()[0]).collect();
            let want: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(ring.encode_counter(), n);
        }
    }
}
