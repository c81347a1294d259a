//! Frame-level AUC, confidence intervals and the experiment drivers.

mod auc;
pub mod mnist;
pub mod plot;

pub use auc::{frame_auc, multi_run_auc, AucResult, LabeledScores};
pub use mnist::{movingmnist_experiment, AnomalyAxis, AxisResult, MnistExperiment, MnistRun};

use std::io::Write;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{compute_background, distort, make_samples, preprocess, BackgroundModel, DistortionSpec, FloatImage, FrameTensor, RainLevel};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::scoring::{EncodedVideo, Metric};
use crate::training::{train, TrainSchedule};

/// Undistorted test video with per-frame labels.
#[derive(Clone, Debug)]
pub struct RawVideo {
    pub id: String,
    pub frames: Vec<FloatImage>,
    pub labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    /// Temporal subsampling factor `d`.
    pub stride: usize,
    /// Normalization window; whole video when absent.
    pub window: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::LatentCosine, Metric::LatentMse, Metric::PixelPrediction],
            stride: 1,
            window: None,
        }
    }
}

/// Pooled evaluation of one metric over a set of videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEval {
    pub metric: Metric,
    /// AUC of per-video normalized scores pooled over all videos.
    pub auc: f64,
    /// AUC of raw scores pooled over all videos.
    pub raw_auc: f64,
    pub mean_normal_raw: Option<f64>,
    pub mean_anomaly_raw: Option<f64>,
    pub frames: usize,
}

/// Per-frame distortion seed, decorrelated across videos and frames.
pub fn frame_seed(seed: u64, video: usize, frame: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((video as u64) << 32 | frame as u64)
}

/// Distorts (optionally), resizes and background-subtracts every frame.
pub fn prepare_video(
    raw: &RawVideo,
    video_index: usize,
    bg: &BackgroundModel,
    size: (usize, usize),
    distortion: Option<(&DistortionSpec, u64)>,
) -> Result<Vec<Arc<FrameTensor>>> {
    let id: Arc<str> = Arc::from(raw.id.as_str());
    raw.frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let frame = match distortion {
                Some((spec, seed)) if !spec.is_identity() => preprocess(&distort(f, spec, frame_seed(seed, video_index, i)), bg, size, i, &id),
                _ => preprocess(f, bg, size, i, &id),
            };
            frame.map(Arc::new)
        })
        .collect()
}

/// Scores every video under `opts.metrics` and pools frames into one AUC per metric.
pub fn evaluate_videos(
    model: &Model,
    bg: &BackgroundModel,
    videos: &[RawVideo],
    opts: &EvalOptions,
    distortion: Option<(&DistortionSpec, u64)>,
) -> Result<Vec<MetricEval>> {
    let size = model.config().input_size;
    let mut pooled = vec![(LabeledScores::default(), LabeledScores::default()); opts.metrics.len()];
    for (vi, v) in videos.iter().enumerate() {
        let frames = prepare_video(v, vi, bg, size, distortion)?;
        let mut enc = EncodedVideo::new(model, &frames, opts.stride)?;
        if enc.scored_len() == 0 {
            warn!("video {} is too short to score", v.id);
            continue;
        }
        for (m, (norm, raw)) in opts.metrics.iter().zip(pooled.iter_mut()) {
            let series = enc.series(*m, opts.window)?;
            norm.extend(&LabeledScores::from_series(&series, &v.labels, true)?);
            raw.extend(&LabeledScores::from_series(&series, &v.labels, false)?);
        }
    }
    opts.metrics
        .iter()
        .zip(pooled)
        .map(|(&metric, (norm, raw))| {
            Ok(MetricEval {
                metric,
                auc: frame_auc(&norm)?,
                raw_auc: frame_auc(&raw)?,
                mean_normal_raw: raw.class_mean(0),
                mean_anomaly_raw: raw.class_mean(1),
                frames: raw.len(),
            })
        })
        .collect()
}

/// Brightness × rain × blur grid; blur defaults to off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub brightness: Vec<f64>,
    pub rain: Vec<RainLevel>,
    #[serde(default = "no_blur")]
    pub blur: Vec<f64>,
}

fn no_blur() -> Vec<f64> {
    vec![0.0]
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            brightness: vec![1.0, 0.75, 0.5],
            rain: vec![RainLevel::None, RainLevel::Heavy, RainLevel::Torrential],
            blur: no_blur(),
        }
    }
}

/// One grid cell and metric; `result` is absent when the condition failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// `(parameter, value)` pairs in column order.
    pub condition: Vec<(String, String)>,
    pub metric: Metric,
    pub result: Option<AucResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn get(&self, condition: &[(&str, &str)], metric: Metric) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| {
            e.metric == metric
                && e.condition.len() == condition.len()
                && e.condition.iter().zip(condition).all(|(a, b)| a.0 == b.0 && a.1 == b.1)
        })
    }

    fn push_all(&mut self, condition: Vec<(String, String)>, metrics: &[Metric], outcome: Result<Vec<MetricEval>>) {
        match outcome {
            Ok(evals) => {
                for e in evals {
                    self.entries.push(SweepEntry {
                        condition: condition.clone(),
                        metric: e.metric,
                        result: Some(AucResult::single(e.auc)),
                        error: None,
                    });
                }
            }
            Err(err) => {
                warn!("condition {condition:?} failed: {err}");
                for &metric in metrics {
                    self.entries.push(SweepEntry {
                        condition: condition.clone(),
                        metric,
                        result: None,
                        error: Some(err.to_string()),
                    });
                }
            }
        }
    }
}

/// Evaluates an undistorted-trained model on distorted copies of the test set.
pub fn robustness_sweep(
    model: &Model,
    bg: &BackgroundModel,
    videos: &[RawVideo],
    grid: &SweepGrid,
    opts: &EvalOptions,
    seed: u64,
) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    for &b in &grid.brightness {
        for &rain in &grid.rain {
            for &blur in &grid.blur {
                let condition = vec![
                    ("brightness".to_string(), b.to_string()),
                    ("rain".to_string(), rain.name().to_string()),
                    ("blur".to_string(), blur.to_string()),
                ];
                let outcome = DistortionSpec::new(b, blur, rain)
                    .and_then(|spec| evaluate_videos(model, bg, videos, opts, Some((&spec, seed))));
                out.push_all(condition, &opts.metrics, outcome);
            }
        }
    }
    Ok(out)
}

/// Trains and tests one model per subsampling factor `d`.
#[allow(clippy::too_many_arguments)]
pub fn lowfps_experiment(
    train_videos: &[RawVideo],
    test_videos: &[RawVideo],
    ds: &[usize],
    config: &ModelConfig,
    schedule: &TrainSchedule,
    model_seed: u64,
    opts: &EvalOptions,
) -> Result<SweepResult> {
    if ds.contains(&0) {
        return Err(Error::Config("subsampling factor d must be at least 1".into()));
    }
    let bg = compute_background(train_videos.iter().flat_map(|v| v.frames.iter()))?;
    let mut out = SweepResult::default();
    for &d in ds {
        let condition = vec![("d".to_string(), d.to_string())];
        let mut samples = Vec::new();
        for (vi, v) in train_videos.iter().enumerate() {
            let frames = prepare_video(v, vi, &bg, config.input_size, None)?;
            samples.extend(make_samples(&frames, config.k, config.t_offset, d));
        }
        if samples.is_empty() {
            out.push_all(condition, &opts.metrics, Err(Error::Invalid(format!("videos too short for d = {d}"))));
            continue;
        }
        let outcome = Model::new(config.clone(), model_seed)
            .and_then(|m| train(&samples, m, schedule, None))
            .and_then(|run| {
                let o = EvalOptions { stride: d, ..opts.clone() };
                evaluate_videos(&run.model, &bg, test_videos, &o, None)
            });
        out.push_all(condition, &opts.metrics, outcome);
    }
    Ok(out)
}

/// CSV with one column per condition parameter, then `metric,auc,ci95`.
pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult) -> std::io::Result<()> {
    let Some(first) = result.entries.first() else {
        return writeln!(w, "metric,auc,ci95");
    };
    let names: Vec<&str> = first.condition.iter().map(|(k, _)| k.as_str()).collect();
    writeln!(w, "{},metric,auc,ci95", names.join(","))?;
    for e in &result.entries {
        let values: Vec<&str> = e.condition.iter().map(|(_, v)| v.as_str()).collect();
        let (auc, ci) = match e.result {
            Some(r) => (r.auc.to_string(), r.ci95_halfwidth.to_string()),
            None => ("NaN".into(), "NaN".into()),
        };
        writeln!(w, "{},{},{},{}", values.join(","), e.metric, auc, ci)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scenario, NormalSet, ObjectKind, Switch, SyntheticSpec, Direction};

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_size: (16, 16),
            k: 3,
            encoder_blocks: 2,
            base_channels: 4,
            latent_channels: 8,
            t_offset: 1,
            motion_blocks: 2,
            leaky_slope: 0.2,
        }
    }

    fn videos(n: usize, len: usize, seed: u64) -> Vec<RawVideo> {
        let normal = NormalSet { objects: ObjectKind::digits(&[1]), speeds: vec![1] };
        (0..n)
            .map(|i| {
                let spec = SyntheticSpec {
                    canvas: (16, 16),
                    object_size: 8,
                    objects: ObjectKind::digits(&[1]),
                    speed: 1,
                    direction: Direction::Either,
                    sequence_length: len,
                    seed: seed + i as u64,
                    start: None,
                };
                let sw = Switch { at_frame: len / 2, objects: Some(vec![ObjectKind::Square]), speed: None };
                let v = generate_scenario(&spec, Some(&sw), &normal).unwrap();
                RawVideo { id: format!("v{i}"), frames: v.frames, labels: v.labels }
            })
            .collect()
    }

    #[test]
    fn sweep_counts_and_identity() {
        let model = Model::new(tiny(), 1).unwrap();
        let vids = videos(2, 12, 3);
        let bg = compute_background(vids.iter().flat_map(|v| v.frames.iter())).unwrap();
        let opts = EvalOptions { metrics: vec![Metric::LatentMse, Metric::PixelPrediction], ..EvalOptions::default() };
        let grid = SweepGrid { brightness: vec![1.0, 0.75, 0.5], rain: vec![RainLevel::None, RainLevel::Heavy], blur: vec![0.0] };
        let r = robustness_sweep(&model, &bg, &vids, &grid, &opts, 5).unwrap();
        assert_eq!(r.entries.len(), 12);
        let base = evaluate_videos(&model, &bg, &vids, &opts, None).unwrap();
        let id = r.get(&[("brightness", "1"), ("rain", "none"), ("blur", "0")], Metric::LatentMse).unwrap();
        assert_eq!(id.result.unwrap().auc, base[0].auc);
        let again = robustness_sweep(&model, &bg, &vids, &grid, &opts, 5).unwrap();
        assert_eq!(r, again);
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &r).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(text.starts_with("brightness,rain,blur,metric,auc,ci95\n"));
    }

    #[test]
    fn bad_condition_is_recorded_not_fatal() {
        let model = Model::new(tiny(), 1).unwrap();
        let vids = videos(1, 12, 3);
        let bg = compute_background(vids[0].frames.iter()).unwrap();
        let grid = SweepGrid { brightness: vec![1.5, 1.0], rain: vec![RainLevel::None], blur: vec![0.0] };
        let opts = EvalOptions { metrics: vec![Metric::LatentMse], ..EvalOptions::default() };
        let r = robustness_sweep(&model, &bg, &vids, &grid, &opts, 0).unwrap();
        assert_eq!(r.entries.len(), 2);
        assert!(r.entries[0].error.is_some() && r.entries[1].result.is_some());
    }

    #[test]
    fn fully_normal_set_has_undefined_auc() {
        let model = Model::new(tiny(), 1).unwrap();
        let mut vids = videos(1, 12, 3);
        vids[0].labels.iter_mut().for_each(|l| *l = 0);
        let bg = BackgroundModel::zeros(16, 16);
        let opts = EvalOptions { metrics: vec![Metric::LatentCosine], ..EvalOptions::default() };
        assert!(matches!(evaluate_videos(&model, &bg, &vids, &opts, None), Err(Error::AucUndefined)));
    }

    #[test]
    fn lowfps_reports_every_d() {
        let train_v = videos(2, 14, 10);
        let test_v = videos(2, 14, 20);
        let schedule = TrainSchedule { total_epochs: 2, phase_switch_epoch: 1, batch_size: 4, lr: 1e-3, ..TrainSchedule::default() };
        let opts = EvalOptions { metrics: vec![Metric::LatentMse, Metric::PixelPrediction], ..EvalOptions::default() };
        let r = lowfps_experiment(&train_v, &test_v, &[1, 2, 8], &tiny(), &schedule, 0, &opts).unwrap();
        assert_eq!(r.entries.len(), 6);
        for d in ["1", "2"] {
            for m in [Metric::LatentMse, Metric::PixelPrediction] {
                assert!(r.get(&[("d", d)], m).unwrap().result.is_some(), "d={d} {m}");
            }
        }
        // 14 frames at d = 8 leave 2 sampled frames, fewer than k + t_offset
        assert!(r.get(&[("d", "8")], Metric::LatentMse).unwrap().error.is_some());
    }
}
