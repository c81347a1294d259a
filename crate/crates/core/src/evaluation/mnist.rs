//! Moving-digit anomaly experiment: train on a few digits at one speed, test on
//! videos that switch part-way to unseen digits, unseen shapes or a new speed.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_videos, plot, prepare_video, EvalOptions, MetricEval, RawVideo};
use crate::data::{compute_background, generate_scenario, make_samples, BackgroundModel, Direction, NormalSet, ObjectKind, Switch, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::{train, LossReport, RunOutput, TrainSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyAxis {
    /// Digits outside the normal set, normal speed.
    UnseenDigits,
    /// Circles and squares, normal speed.
    UnseenShapes,
    /// Normal digits at a different speed.
    UnseenSpeed(u32),
}

impl fmt::Display for AnomalyAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyAxis::UnseenDigits => f.write_str("unseen_digits"),
            AnomalyAxis::UnseenShapes => f.write_str("unseen_shapes"),
            AnomalyAxis::UnseenSpeed(s) => write!(f, "speed_{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistExperiment {
    /// (height, width)
    pub canvas: (usize, usize),
    pub object_size: usize,
    pub normal_digits: Vec<u8>,
    pub normal_speed: u32,
    pub train_videos: usize,
    pub train_length: usize,
    /// Test videos per anomaly axis.
    pub test_videos: usize,
    pub test_length: usize,
    /// Frame at which test videos switch to the anomalous content.
    pub switch_at: usize,
    pub axes: Vec<AnomalyAxis>,
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub model_seed: u64,
    pub data_seed: u64,
    pub eval: EvalOptions,
}

impl MnistExperiment {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate()?;
        if self.model.input_size != self.canvas {
            return Err(Error::Config(format!(
                "canvas {:?} must equal the model input size {:?}",
                self.canvas, self.model.input_size
            )));
        }
        if self.normal_digits.is_empty() || self.normal_digits.iter().any(|&d| d > 9) {
            return Err(Error::Config("normal_digits must be a non-empty subset of 0..=9".into()));
        }
        if self.switch_at == 0 || self.switch_at >= self.test_length {
            return Err(Error::Config("switch_at must fall inside the test videos".into()));
        }
        for axis in &self.axes {
            match axis {
                AnomalyAxis::UnseenSpeed(s) if *s == self.normal_speed || *s == 0 => {
                    return Err(Error::Config(format!("anomalous speed {s} is not distinct from the normal speed")))
                }
                AnomalyAxis::UnseenDigits if self.unseen_digits().is_empty() => {
                    return Err(Error::Config("every digit is normal; no unseen digits left".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn normal_set(&self) -> NormalSet {
        NormalSet {
            objects: ObjectKind::digits(&self.normal_digits),
            speeds: vec![self.normal_speed],
        }
    }

    fn unseen_digits(&self) -> Vec<u8> {
        (0..10).filter(|d| !self.normal_digits.contains(d)).collect()
    }

    fn spec(&self, length: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            canvas: self.canvas,
            object_size: self.object_size,
            objects: ObjectKind::digits(&self.normal_digits),
            speed: self.normal_speed,
            direction: Direction::Either,
            sequence_length: length,
            seed,
            start: None,
        }
    }

    /// Normal-only training videos.
    pub fn train_set(&self) -> Result<Vec<RawVideo>> {
        (0..self.train_videos)
            .map(|i| {
                let v = generate_scenario(&self.spec(self.train_length, mix(self.data_seed, 0, i)), None, &self.normal_set())?;
                Ok(RawVideo { id: format!("train_{i:03}"), frames: v.frames, labels: v.labels })
            })
            .collect()
    }

    /// Test videos that start normal and switch along `axis` at `switch_at`.
    pub fn test_set(&self, axis: AnomalyAxis) -> Result<Vec<RawVideo>> {
        let tag = match axis {
            AnomalyAxis::UnseenDigits => 1,
            AnomalyAxis::UnseenShapes => 2,
            AnomalyAxis::UnseenSpeed(s) => 100 + s as usize,
        };
        let switch = match axis {
            AnomalyAxis::UnseenDigits => Switch {
                at_frame: self.switch_at,
                objects: Some(ObjectKind::digits(&self.unseen_digits())),
                speed: None,
            },
            AnomalyAxis::UnseenShapes => Switch {
                at_frame: self.switch_at,
                objects: Some(vec![ObjectKind::Circle, ObjectKind::Square]),
                speed: None,
            },
            AnomalyAxis::UnseenSpeed(s) => Switch { at_frame: self.switch_at, objects: None, speed: Some(s) },
        };
        (0..self.test_videos)
            .map(|i| {
                let spec = self.spec(self.test_length, mix(self.data_seed, tag, i));
                let v = generate_scenario(&spec, Some(&switch), &self.normal_set())?;
                Ok(RawVideo { id: format!("{axis}_{i:03}"), frames: v.frames, labels: v.labels })
            })
            .collect()
    }
}

fn mix(seed: u64, tag: usize, i: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((tag as u64) << 40) ^ i as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisResult {
    pub axis: AnomalyAxis,
    pub evals: Vec<MetricEval>,
}

pub struct MnistRun {
    pub model: Model,
    pub background: BackgroundModel,
    pub losses: Vec<LossReport>,
    pub results: Vec<AxisResult>,
    pub test_sets: Vec<(AnomalyAxis, Vec<RawVideo>)>,
}

/// Trains on normal videos only and evaluates every anomaly axis.
///
/// With `out_dir`, training artifacts and one input / reconstruction /
/// prediction / error grid per axis (`grid_<axis>.png`) are written there.
pub fn movingmnist_experiment(exp: &MnistExperiment, out_dir: Option<&Path>) -> Result<MnistRun> {
    exp.validate()?;
    let train_videos = exp.train_set()?;
    let background = compute_background(train_videos.iter().flat_map(|v| v.frames.iter()))?;
    let mut samples = Vec::new();
    for (i, v) in train_videos.iter().enumerate() {
        let frames = prepare_video(v, i, &background, exp.model.input_size, None)?;
        samples.extend(make_samples(&frames, exp.model.k, exp.model.t_offset, exp.eval.stride));
    }
    let model = Model::new(exp.model.clone(), exp.model_seed)?;
    let out = out_dir.map(|dir| RunOutput { dir, background: Some(&background) });
    let run = train(&samples, model, &exp.schedule, out)?;

    let mut results = Vec::new();
    let mut test_sets = Vec::new();
    for &axis in &exp.axes {
        let videos = exp.test_set(axis)?;
        let evals = evaluate_videos(&run.model, &background, &videos, &exp.eval, None)?;
        if let Some(dir) = out_dir {
            let frames = prepare_video(&videos[0], 0, &background, exp.model.input_size, None)?;
            let offset = exp.model.frame_offset();
            let rows: Vec<usize> = [exp.switch_at.saturating_sub(2), exp.switch_at + 4, exp.test_length - 1]
                .into_iter()
                .filter(|&t| t >= offset && t < frames.len())
                .collect();
            let grid = plot::frame_grid(&run.model, &frames, &rows)?;
            plot::save_rgb(&grid, &dir.join(format!("grid_{axis}.png")))?;
        }
        results.push(AxisResult { axis, evals });
        test_sets.push((axis, videos));
    }
    Ok(MnistRun {
        model: run.model,
        background,
        losses: run.epochs,
        results,
        test_sets,
    })
}
