//! Per-frame anomaly scores, min-max normalization and error-region localization.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{subsample, FrameTensor};
use crate::error::{Error, Result};
use crate::model::{LatentCode, Model, Norm};
use crate::nn::Tensor;

/// Default centered window for per-window normalization, in frames.
pub const DEFAULT_WINDOW: usize = 64;
/// Default quantile of the error map used as localization threshold.
pub const DEFAULT_LOCALIZE_QUANTILE: f64 = 0.99;
pub const DEFAULT_MIN_AREA: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LatentMse,
    LatentCosine,
    #[serde(alias = "pixel_prediction_mse")]
    PixelPrediction,
    #[serde(alias = "pixel_reconstruction_mse")]
    PixelReconstruction,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::LatentMse,
        Metric::LatentCosine,
        Metric::PixelPrediction,
        Metric::PixelReconstruction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::LatentMse => "latent_mse",
            Metric::LatentCosine => "latent_cosine",
            Metric::PixelPrediction => "pixel_prediction",
            Metric::PixelReconstruction => "pixel_reconstruction",
        }
    }

    /// Whether scoring needs the decoder.
    pub fn needs_decoder(self) -> bool {
        matches!(self, Metric::PixelPrediction | Metric::PixelReconstruction)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent_mse" => Ok(Metric::LatentMse),
            "latent_cosine" => Ok(Metric::LatentCosine),
            "pixel_prediction" | "pixel_prediction_mse" => Ok(Metric::PixelPrediction),
            "pixel_reconstruction" | "pixel_reconstruction_mse" => Ok(Metric::PixelReconstruction),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_same(a: &[f64], b: &[f64], sa: &[usize], sb: &[usize]) -> Result<()> {
    if sa != sb || a.len() != b.len() {
        return Err(Error::shape(sa, sb));
    }
    Ok(())
}

pub(crate) fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

pub(crate) fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Mean squared difference over all latent elements.
pub fn latent_mse(pred: &LatentCode, actual: &LatentCode) -> Result<f64> {
    check_same(pred.as_slice(), actual.as_slice(), pred.shape(), actual.shape())?;
    Ok(mse(pred.as_slice(), actual.as_slice()))
}

/// `1 - cos(pred, actual)` over the flattened codes, in `[0, 2]`.
pub fn latent_cosine(pred: &LatentCode, actual: &LatentCode) -> Result<f64> {
    check_same(pred.as_slice(), actual.as_slice(), pred.shape(), actual.shape())?;
    cosine_distance(pred.as_slice(), actual.as_slice())
}

fn latent_score(metric: Metric, pred: &[f64], actual: &[f64]) -> Result<f64> {
    match metric {
        Metric::LatentMse => Ok(mse(pred, actual)),
        Metric::LatentCosine => cosine_distance(pred, actual),
        _ => unreachable!("pixel metrics are not latent scores"),
    }
}

/// Min-max normalization to `[0, 1]`.
///
/// Without a window the whole series is one group. With a window each frame is
/// scaled by the min/max of a centered window of that size, shifted inward at
/// the series edges so it always spans `min(window, len)` frames. Flat groups
/// map to 0.
pub fn normalize_scores(raw: &[f64], window: Option<usize>) -> Vec<f64> {
    let n = raw.len();
    let scale = |v: f64, lo: f64, hi: f64| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    match window {
        None => {
            let (lo, hi) = min_max(raw);
            raw.iter().map(|&v| scale(v, lo, hi)).collect()
        }
        Some(w) => {
            let w = w.clamp(1, n.max(1));
            (0..n)
                .map(|i| {
                    let start = i.saturating_sub((w - 1) / 2).min(n - w);
                    let (lo, hi) = min_max(&raw[start..start + w]);
                    scale(raw[i], lo, hi)
                })
                .collect()
        }
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Online normalization over the most recent `window` raw scores.
#[derive(Clone, Debug)]
pub struct TrailingNormalizer {
    window: usize,
    recent: VecDeque<f64>,
}

impl TrailingNormalizer {
    pub fn new(window: usize) -> Self {
        Self {
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
        }
    }

    /// Adds `raw` and returns it scaled by the min/max of the trailing window.
    pub fn push(&mut self, raw: f64) -> f64 {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(raw);
        let (lo, hi) = self
            .recent
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi > lo {
            (raw - lo) / (hi - lo)
        } else {
            0.0
        }
    }
}

/// Per-pixel error averaged over channels, `height × width`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ErrorMap {
    /// Channel-mean squared error between two `[C, H, W]` tensors.
    pub fn between(pred: &Tensor, target: &Tensor) -> Result<Self> {
        if pred.shape() != target.shape() || pred.shape().len() != 3 {
            return Err(Error::shape(target.shape(), pred.shape()));
        }
        let (c, h, w) = (pred.shape()[0], pred.shape()[1], pred.shape()[2]);
        let mut values = vec![0.0; h * w];
        for ch in 0..c {
            let off = ch * h * w;
            for (i, v) in values.iter_mut().enumerate() {
                let d = pred.data()[off + i] - target.data()[off + i];
                *v += d * d / c as f64;
            }
        }
        Ok(Self { height: h, width: w, values })
    }

    /// Value at quantile `q ∈ [0, 1]` (nearest rank).
    pub fn quantile(&self, q: f64) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let idx = ((q.clamp(0.0, 1.0) * (v.len() - 1) as f64).round()) as usize;
        v[idx]
    }
}

/// Axis-aligned box in frame pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub mean_error: f64,
}

/// Bounding boxes of 8-connected components of `error > threshold` with at
/// least `min_area` pixels, sorted by mean error (descending).
pub fn localize(map: &ErrorMap, threshold: f64, min_area: usize) -> Vec<Region> {
    let (h, w) = (map.height, map.width);
    let hot: Vec<bool> = map.values.iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if !hot[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
        let (mut area, mut sum) = (0usize, 0.0);
        while let Some(p) = stack.pop() {
            let (y, x) = (p / w, p % w);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
            area += 1;
            sum += map.values[p];
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if hot[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if area >= min_area {
            regions.push(Region {
                x: x0,
                y: y0,
                w: x1 - x0 + 1,
                h: y1 - y0 + 1,
                mean_error: sum / area as f64,
            });
        }
    }
    regions.sort_by(|a, b| b.mean_error.total_cmp(&a.mean_error));
    regions
}

/// Pixel-space ablation score for one sample.
///
/// Prediction mode decodes `ẑ_t` with frame `T_k`'s pyramid as shortcut
/// source and compares it to `T_t`; reconstruction mode averages the per-pixel
/// error of `T̂_q` over `q = 2..=k`.
pub fn pixel_scores(model: &Model, sample: &crate::data::SequenceSample, metric: Metric) -> Result<f64> {
    let encoded: Vec<_> = sample.inputs.iter().map(|f| model.encode(f)).collect::<Result<_>>()?;
    match metric {
        Metric::PixelPrediction => {
            let codes: Vec<&LatentCode> = encoded.iter().map(|(z, _)| z).collect();
            let pred = model.predict_latent(&codes)?;
            let frame = model.decode(&pred, &encoded[encoded.len() - 1].1)?;
            Ok(mse(frame.data(), sample.future_target.pixels.data()))
        }
        Metric::PixelReconstruction => {
            let mut total = 0.0;
            for q in 1..encoded.len() {
                let frame = model.decode(&encoded[q].0, &encoded[q - 1].1)?;
                total += mse(frame.data(), sample.inputs[q].pixels.data());
            }
            Ok(total / (encoded.len() - 1) as f64)
        }
        m => Err(Error::Invalid(format!("{m} is not a pixel metric"))),
    }
}

/// Scores of one video under one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScoreSeries {
    pub video_id: String,
    pub metric: Metric,
    /// Sampled-frame index of the first scored frame, `k - 1 + t_offset`.
    pub frame_offset: usize,
    /// Source-video index of each scored frame.
    pub frame_indices: Vec<usize>,
    pub raw_scores: Vec<f64>,
    pub normalized_scores: Vec<f64>,
}

/// Encoded video kept in memory for scoring under several metrics.
pub struct EncodedVideo<'a> {
    model: &'a Model,
    frames: Vec<Arc<FrameTensor>>,
    /// Pyramid levels for all frames, `levels[l]` is `[N, C_l, h_l, w_l]`.
    levels: Vec<Tensor>,
    predictions: Option<Tensor>,
}

const ENCODE_CHUNK: usize = 32;

impl<'a> EncodedVideo<'a> {
    /// Encodes every `stride`-th frame once, in inference mode.
    pub fn new(model: &'a Model, video: &[Arc<FrameTensor>], stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Invalid("stride must be at least 1".into()));
        }
        let frames = subsample(video, stride);
        let want = model.config().frame_shape();
        for f in &frames {
            if f.pixels.shape() != want {
                return Err(Error::shape(&want, f.pixels.shape()));
            }
        }
        let mut parts: Vec<Vec<Tensor>> = Vec::new();
        for chunk in frames.chunks(ENCODE_CHUNK) {
            let batch = Tensor::stack(&chunk.iter().map(|f| &f.pixels).collect::<Vec<_>>());
            parts.push(model.encode_batch(&batch)?);
        }
        let blocks = model.config().encoder_blocks;
        let levels = (0..blocks)
            .map(|l| concat_batches(&parts.iter().map(|p| &p[l]).collect::<Vec<_>>(), &level_shape(model, l)))
            .collect();
        Ok(Self {
            model,
            frames,
            levels,
            predictions: None,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of scoreable frames.
    pub fn scored_len(&self) -> usize {
        let cfg = self.model.config();
        crate::data::sample_count(self.frames.len(), cfg.k, cfg.t_offset)
    }

    fn offset(&self) -> usize {
        self.model.config().frame_offset()
    }

    pub fn latent(&self, i: usize) -> &[f64] {
        self.levels.last().expect("levels").item(i)
    }

    /// Predicted latents for every scoreable frame, `[n_scored, C, h, w]`.
    pub fn predictions(&mut self) -> &Tensor {
        if self.predictions.is_none() {
            let k = self.model.config().k;
            let n = self.scored_len();
            let latents = self.levels.last().expect("levels");
            let mut out: Vec<f64> = Vec::with_capacity(n * latents.item_len());
            let per = ENCODE_CHUNK;
            for start in (0..n).step_by(per) {
                let end = (start + per).min(n);
                let idx: Vec<usize> = (start..end).flat_map(|i| i..i + k).collect();
                let pred = self.model.predict_batch(&latents.gather(&idx));
                out.extend_from_slice(pred.data());
            }
            let mut shape = latents.shape().to_vec();
            shape[0] = n;
            self.predictions = Some(Tensor::from_vec(&shape, out));
        }
        self.predictions.as_ref().expect("just computed")
    }

    fn pyramid_rows(&self, idx: &[usize]) -> Vec<Tensor> {
        self.levels.iter().map(|l| l.gather(idx)).collect()
    }

    /// Decoded predicted frames for scoreable frames `range`.
    fn decode_predictions(&mut self, range: std::ops::Range<usize>) -> Tensor {
        let k = self.model.config().k;
        let preds = self.predictions().gather(&range.clone().collect::<Vec<_>>());
        let prev: Vec<usize> = range.map(|i| i + k - 1).collect();
        let pyr = self.pyramid_rows(&prev);
        self.model.decoder.infer(&preds, &pyr, Norm::Running)
    }

    /// Raw scores for every scoreable frame.
    pub fn raw_scores(&mut self, metric: Metric) -> Result<Vec<f64>> {
        let n = self.scored_len();
        let off = self.offset();
        match metric {
            Metric::LatentMse | Metric::LatentCosine => {
                self.predictions();
                let preds = self.predictions.as_ref().expect("computed");
                (0..n)
                    .map(|i| latent_score(metric, preds.item(i), self.latent(i + off)))
                    .collect()
            }
            Metric::PixelPrediction => {
                let mut out = Vec::with_capacity(n);
                for start in (0..n).step_by(ENCODE_CHUNK) {
                    let end = (start + ENCODE_CHUNK).min(n);
                    let frames = self.decode_predictions(start..end);
                    for i in start..end {
                        out.push(mse(frames.item(i - start), self.frames[i + off].pixels.data()));
                    }
                }
                Ok(out)
            }
            Metric::PixelReconstruction => {
                let k = self.model.config().k;
                // error of each frame j >= 1 reconstructed from (z_j, pyramid_{j-1})
                let m = self.frames.len();
                let mut per_frame = vec![0.0; m];
                for start in (1..m).step_by(ENCODE_CHUNK) {
                    let end = (start + ENCODE_CHUNK).min(m);
                    let cur: Vec<usize> = (start..end).collect();
                    let prev: Vec<usize> = (start - 1..end - 1).collect();
                    let z = self.levels.last().expect("levels").gather(&cur);
                    let pyr = self.pyramid_rows(&prev);
                    let rec = self.model.decoder.infer(&z, &pyr, Norm::Running);
                    for j in start..end {
                        per_frame[j] = mse(rec.item(j - start), self.frames[j].pixels.data());
                    }
                }
                Ok((0..n)
                    .map(|i| per_frame[i + 1..i + k].iter().sum::<f64>() / (k - 1) as f64)
                    .collect())
            }
        }
    }

    pub fn series(&mut self, metric: Metric, window: Option<usize>) -> Result<AnomalyScoreSeries> {
        let raw = self.raw_scores(metric)?;
        let off = self.offset();
        let video_id = self.frames.first().map(|f| f.video_id.to_string()).unwrap_or_default();
        Ok(AnomalyScoreSeries {
            video_id,
            metric,
            frame_offset: off,
            frame_indices: (0..raw.len()).map(|i| self.frames[i + off].frame_index).collect(),
            normalized_scores: normalize_scores(&raw, window),
            raw_scores: raw,
        })
    }

    /// Prediction error maps of every scoreable frame.
    pub fn prediction_error_maps(&mut self) -> Result<Vec<ErrorMap>> {
        let n = self.scored_len();
        let off = self.offset();
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(ENCODE_CHUNK) {
            let end = (start + ENCODE_CHUNK).min(n);
            let frames = self.decode_predictions(start..end);
            let shape = self.model.config().frame_shape();
            for i in start..end {
                let pred = Tensor::from_vec(&shape, frames.item(i - start).to_vec());
                out.push(ErrorMap::between(&pred, &self.frames[i + off].pixels)?);
            }
        }
        Ok(out)
    }

    /// Localized regions per scoreable frame, thresholded at a per-frame quantile.
    pub fn localize(&mut self, quantile: f64, min_area: usize) -> Result<Vec<(usize, Vec<Region>)>> {
        let off = self.offset();
        let maps = self.prediction_error_maps()?;
        Ok(maps
            .iter()
            .enumerate()
            .map(|(i, m)| (self.frames[i + off].frame_index, localize(m, m.quantile(quantile), min_area)))
            .collect())
    }
}

fn level_shape(model: &Model, l: usize) -> Vec<usize> {
    let (h, w) = model.config().level_size(l + 1);
    vec![0, model.config().level_channels(l + 1), h, w]
}

fn concat_batches(parts: &[&Tensor], empty_shape: &[usize]) -> Tensor {
    if parts.is_empty() {
        return Tensor::zeros(empty_shape);
    }
    let mut shape = parts[0].shape().to_vec();
    shape[0] = parts.iter().map(|p| p.batch()).sum();
    let data = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    Tensor::from_vec(&shape, data)
}

/// Scores one video under several metrics, encoding every frame once.
pub fn score_video(
    model: &Model,
    video: &[Arc<FrameTensor>],
    metrics: &[Metric],
    stride: usize,
    window: Option<usize>,
) -> Result<Vec<AnomalyScoreSeries>> {
    let mut enc = EncodedVideo::new(model, video, stride)?;
    metrics.iter().map(|&m| enc.series(m, window)).collect()
}

pub const SCORES_CSV_HEADER: &str = "video_id,frame_index,raw_score,normalized_score,metric";
pub const REGIONS_CSV_HEADER: &str = "video_id,frame_index,x,y,w,h,mean_error";

pub fn write_scores_csv<W: Write>(mut w: W, series: &[AnomalyScoreSeries]) -> std::io::Result<()> {
    writeln!(w, "{SCORES_CSV_HEADER}")?;
    for s in series {
        for ((idx, raw), norm) in s.frame_indices.iter().zip(&s.raw_scores).zip(&s.normalized_scores) {
            writeln!(w, "{},{},{},{},{}", s.video_id, idx, raw, norm, s.metric)?;
        }
    }
    Ok(())
}

pub fn write_regions_csv<W: Write>(mut w: W, video_id: &str, regions: &[(usize, Vec<Region>)]) -> std::io::Result<()> {
    for (frame, rs) in regions {
        for r in rs {
            writeln!(w, "{},{},{},{},{},{},{}", video_id, frame, r.x, r.y, r.w, r.h, r.mean_error)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn code(v: Vec<f64>) -> LatentCode {
        LatentCode {
            values: Tensor::from_vec(&[v.len(), 1, 1], v),
        }
    }

    #[test]
    fn metric_examples() {
        let a = code(vec![0.3, -1.2, 2.0, 0.5]);
        let shifted = code(a.as_slice().iter().map(|v| v + 1.0).collect());
        let neg = code(a.as_slice().iter().map(|v| -v).collect());
        assert_eq!(latent_mse(&a, &a).unwrap(), 0.0);
        assert!((latent_mse(&shifted, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(latent_cosine(&a, &a).unwrap().abs() < 1e-12);
        assert!((latent_cosine(&neg, &a).unwrap() - 2.0).abs() < 1e-12);
        assert!((latent_cosine(&code(vec![1.0, 0.0]), &code(vec![0.0, 1.0])).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(latent_cosine(&code(vec![0.0, 0.0]), &code(vec![0.0, 1.0])), Err(Error::UndefinedCosine)));
        assert!(latent_mse(&code(vec![1.0]), &code(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_scores(&[2.0, 4.0, 6.0], None), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[3.0; 3], None), vec![0.0; 3]);
        let w = normalize_scores(&[1.0, 2.0, 3.0, 4.0, 5.0], Some(3));
        assert!((w[2] - 0.5).abs() < 1e-12);
        // edge windows are shifted inward: frame 0 uses [1, 2, 3]
        assert_eq!(w[0], 0.0);
        assert_eq!(w[4], 1.0);
    }

    #[test]
    fn localize_examples() {
        let mut map = ErrorMap { height: 32, width: 32, values: vec![0.0; 1024] };
        assert!(localize(&map, 0.5, 1).is_empty());
        for y in 4..14 {
            for x in 6..16 {
                map.values[y * 32 + x] = 1.0;
            }
        }
        assert_eq!(localize(&map, 0.5, 25), vec![Region { x: 6, y: 4, w: 10, h: 10, mean_error: 1.0 }]);
        for y in 20..26 {
            for x in 20..26 {
                map.values[y * 32 + x] = 2.0;
            }
        }
        let r = localize(&map, 0.5, 25);
        assert_eq!(r.len(), 2);
        assert_eq!((r[0].x, r[0].y, r[0].w, r[0].h), (20, 20, 6, 6));
        // diagonal touch joins components under 8-connectivity
        map.values[14 * 32 + 16] = 1.0;
        map.values[15 * 32 + 17] = 1.0;
        map.values[16 * 32 + 18] = 1.0;
        map.values[17 * 32 + 19] = 1.0;
        map.values[18 * 32 + 19] = 1.0;
        map.values[19 * 32 + 19] = 1.0;
        assert_eq!(localize(&map, 0.5, 25).len(), 1);
    }

    #[test]
    fn trailing_normalizer_uses_recent_window() {
        let mut n = TrailingNormalizer::new(2);
        assert_eq!(n.push(5.0), 0.0);
        assert_eq!(n.push(7.0), 1.0);
        assert_eq!(n.push(6.0), 0.0);
    }

    #[test]
    fn batched_video_scores_match_per_sample_path() {
        use crate::data::make_samples;
        use crate::model::ModelConfig;
        use rand::{Rng, SeedableRng};
        let cfg = ModelConfig {
            input_size: (16, 16),
            k: 3,
            encoder_blocks: 2,
            base_channels: 4,
            latent_channels: 8,
            t_offset: 2,
            motion_blocks: 2,
            leaky_slope: 0.2,
        };
        let model = Model::new(cfg.clone(), 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let id: Arc<str> = Arc::from("clip");
        let video: Vec<Arc<FrameTensor>> = (0..40)
            .map(|i| {
                Arc::new(FrameTensor {
                    pixels: Tensor::from_vec(&[3, 16, 16], (0..768).map(|_| rng.gen_range(-1.0..1.0)).collect()),
                    frame_index: i,
                    video_id: Arc::clone(&id),
                })
            })
            .collect();
        for stride in [1, 2] {
            let all = score_video(&model, &video, &Metric::ALL, stride, None).unwrap();
            let samples = make_samples(&video, cfg.k, cfg.t_offset, stride);
            for series in &all {
                assert_eq!(series.raw_scores.len(), samples.len());
                assert_eq!(series.frame_offset, cfg.k - 1 + cfg.t_offset);
                for (i, s) in samples.iter().enumerate() {
                    assert_eq!(series.frame_indices[i], s.target_index());
                    let want = match series.metric {
                        Metric::LatentMse | Metric::LatentCosine => {
                            let codes: Vec<LatentCode> = s.inputs.iter().map(|f| model.encode(f).unwrap().0).collect();
                            let pred = model.predict_latent(&codes.iter().collect::<Vec<_>>()).unwrap();
                            let actual = model.encode(&s.future_target).unwrap().0;
                            if series.metric == Metric::LatentMse {
                                latent_mse(&pred, &actual).unwrap()
                            } else {
                                latent_cosine(&pred, &actual).unwrap()
                            }
                        }
                        m => pixel_scores(&model, s, m).unwrap(),
                    };
                    assert!((series.raw_scores[i] - want).abs() < 1e-9, "{} frame {i}", series.metric);
                }
            }
        }
    }

    #[test]
    fn pixel_prediction_error_is_mean_square() {
        let a = Tensor::from_vec(&[3, 2, 2], (0..12).map(|v| v as f64 * 0.1).collect());
        let b = a.map(|v| v + 0.5);
        assert!((mse(b.data(), a.data()) - 0.25).abs() < 1e-12);
        let map = ErrorMap::between(&b, &a).unwrap();
        assert!(map.values.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..80)
    }

    proptest! {
        #[test]
        fn normalization_is_affine_invariant(raw in series(), a in 0.01f64..50.0, b in -50.0f64..50.0, w in prop::option::of(1usize..40)) {
            let t: Vec<f64> = raw.iter().map(|v| a * v + b).collect();
            let x = normalize_scores(&raw, w);
            let y = normalize_scores(&t, w);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(p));
            }
        }

        #[test]
        fn wide_window_equals_whole_series(raw in series(), extra in 0usize..10) {
            prop_assert_eq!(normalize_scores(&raw, Some(raw.len() + extra)), normalize_scores(&raw, None));
        }

        #[test]
        fn argmax_preserved(raw in series()) {
            let norm = normalize_scores(&raw, None);
            let (lo, hi) = min_max(&raw);
            prop_assume!(hi > lo);
            let arg = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            prop_assert_eq!(norm[arg(&raw)], 1.0);
            prop_assert_eq!(raw[arg(&norm)], hi);
        }

        #[test]
        fn metrics_permutation_and_scaling(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..40),
            seed in any::<u64>(),
            s in 0.1f64..10.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
            let mut perm: Vec<usize> = (0..a.len()).collect();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            let (ca, cb, cpa, cpb) = (code(a.clone()), code(b.clone()), code(pa), code(pb));
            let mse0 = latent_mse(&ca, &cb).unwrap();
            let cos0 = latent_cosine(&ca, &cb).unwrap();
            prop_assert!((latent_mse(&cpa, &cpb).unwrap() - mse0).abs() < 1e-9);
            prop_assert!((latent_cosine(&cpa, &cpb).unwrap() - cos0).abs() < 1e-9);
            let sa = code(a.iter().map(|v| v * s).collect());
            let sb = code(b.iter().map(|v| v * s).collect());
            prop_assert!((latent_mse(&sa, &sb).unwrap() - s * s * mse0).abs() < 1e-9 * (1.0 + s * s * mse0));
            prop_assert!((latent_cosine(&sa, &cb).unwrap() - cos0).abs() < 1e-9);
            // scalar-loop oracle
            let mut acc = 0.0;
            for i in 0..a.len() { acc += (a[i] - b[i]) * (a[i] - b[i]); }
            prop_assert!((mse0 - acc / a.len() as f64).abs() < 1e-9);
        }

        #[test]
        fn regions_stay_in_bounds(values in prop::collection::vec(0.0f64..1.0, 24 * 20), thr in 0.0f64..1.0) {
            let map = ErrorMap { height: 24, width: 20, values };
            for r in localize(&map, thr, 1) {
                prop_assert!(r.x + r.w <= 20 && r.y + r.h <= 24);
                prop_assert!(r.mean_error > thr);
            }
        }
    }
}
