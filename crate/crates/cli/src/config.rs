//! Run configuration: defaults, then a named preset, then a TOML file, then
//! command-line flags, each layer overriding the previous one.

use std::fs;
use std::path::{Path, PathBuf};

use latentvad::data::{Direction, ObjectKind};
use latentvad::evaluation::{AnomalyAxis, SweepGrid};
use latentvad::model::ModelConfig;
use latentvad::scoring::{Metric, DEFAULT_LOCALIZE_QUANTILE, DEFAULT_MIN_AREA, DEFAULT_WINDOW};
use latentvad::training::TrainSchedule;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub out: PathBuf,
    pub seed: u64,
    /// Write PNG plots next to the CSVs.
    pub plots: bool,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub scoring: ScoringConfig,
    pub sweep: SweepGrid,
    pub lowfps: LowFpsConfig,
    pub bench: BenchConfig,
    pub synth: SynthConfig,
    pub mnist: MnistConfig,
    /// Whether the model section came from a preset, file or flag rather than the defaults.
    #[serde(skip)]
    pub model_explicit: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of training videos (one sub-directory or `.y4m` file each).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// `video_id,frame_index,label` CSV for the test videos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    pub metric: Metric,
    /// Centered normalization window; `0` normalizes each video as a whole.
    pub window: usize,
    /// Temporal subsampling factor.
    pub stride: usize,
    pub localize: bool,
    pub localize_quantile: f64,
    pub min_area: usize,
    /// Metrics reported side by side by `sweep`, `lowfps` and `mnist-exp`.
    pub compare_metrics: Vec<Metric>,
}

impl ScoringConfig {
    pub fn window(&self) -> Option<usize> {
        (self.window > 0).then_some(self.window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowFpsConfig {
    pub d: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub warmup: usize,
}

/// Synthetic dataset written by `synth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub canvas: (usize, usize),
    pub object_size: usize,
    pub normal_objects: Vec<ObjectKind>,
    pub normal_speed: u32,
    pub direction: Direction,
    pub train_videos: usize,
    pub test_videos: usize,
    pub length: usize,
    /// Test videos switch to `anomaly_objects` / `anomaly_speed` at this frame.
    pub switch_at: usize,
    pub anomaly_objects: Vec<ObjectKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly_speed: Option<u32>,
}

/// Moving-digit experiment; model and schedule come from the top level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistConfig {
    pub object_size: usize,
    pub normal_digits: Vec<u8>,
    pub normal_speed: u32,
    pub train_videos: usize,
    pub train_length: usize,
    pub test_videos: usize,
    pub test_length: usize,
    pub switch_at: usize,
    pub axes: Vec<AnomalyAxis>,
}

impl RunConfig {
    fn defaults() -> Self {
        Self {
            preset: None,
            out: PathBuf::from("runs/latest"),
            seed: 0,
            plots: false,
            data: DataConfig::default(),
            model: ModelConfig::preset("ucsd_ped2").expect("built-in preset"),
            schedule: TrainSchedule::default(),
            scoring: ScoringConfig {
                metric: Metric::LatentCosine,
                window: DEFAULT_WINDOW,
                stride: 1,
                localize: false,
                localize_quantile: DEFAULT_LOCALIZE_QUANTILE,
                min_area: DEFAULT_MIN_AREA,
                compare_metrics: vec![Metric::LatentCosine, Metric::LatentMse, Metric::PixelPrediction],
            },
            sweep: SweepGrid::default(),
            lowfps: LowFpsConfig { d: vec![1, 2, 3, 4] },
            bench: BenchConfig { warmup: 10 },
            synth: SynthConfig {
                canvas: (64, 64),
                object_size: 28,
                normal_objects: ObjectKind::digits(&[4, 7]),
                normal_speed: 2,
                direction: Direction::Either,
                train_videos: 10,
                test_videos: 5,
                length: 60,
                switch_at: 30,
                anomaly_objects: vec![ObjectKind::Circle, ObjectKind::Square],
                anomaly_speed: None,
            },
            mnist: MnistConfig {
                object_size: 28,
                normal_digits: vec![4, 7],
                normal_speed: 2,
                train_videos: 24,
                train_length: 30,
                test_videos: 6,
                test_length: 40,
                switch_at: 20,
                axes: vec![AnomalyAxis::UnseenDigits, AnomalyAxis::UnseenShapes, AnomalyAxis::UnseenSpeed(4)],
            },
            model_explicit: false,
        }
    }

    /// Layers the preset, the optional config file and flag overrides over the defaults.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: Table) -> Result<Self, CliError> {
        let mut merged = Value::try_from(Self::defaults()).map_err(|e| CliError::Config(e.to_string()))?;
        let file_table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        // a preset named on the command line wins over one named in the file
        let preset = preset
            .map(str::to_owned)
            .or_else(|| file_table.get("preset").and_then(Value::as_str).map(str::to_owned));
        let model_explicit = preset.is_some() || file_table.contains_key("model") || overrides.contains_key("model");
        if let Some(name) = &preset {
            merge(&mut merged, preset_table(name)?);
        }
        merge(&mut merged, Value::Table(file_table));
        merge(&mut merged, Value::Table(overrides));
        if let (Some(name), Value::Table(t)) = (&preset, &mut merged) {
            t.insert("preset".into(), Value::String(name.clone()));
        }
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.model_explicit = model_explicit;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |field: &str, e: latentvad::Error| CliError::Config(format!("{field}: {e}"));
        self.model.validate().map_err(|e| wrap("model", e))?;
        self.schedule.validate().map_err(|e| wrap("schedule", e))?;
        if self.scoring.stride == 0 {
            return Err(CliError::Config("scoring.stride: must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.scoring.localize_quantile) {
            return Err(CliError::Config("scoring.localize_quantile: must lie in [0, 1]".into()));
        }
        for &b in &self.sweep.brightness {
            latentvad::data::DistortionSpec::new(b, 0.0, latentvad::data::RainLevel::None)
                .map_err(|e| wrap("sweep.brightness", e))?;
        }
        if self.sweep.blur.iter().any(|s| !(*s >= 0.0)) {
            return Err(CliError::Config("sweep.blur: sigmas must be >= 0".into()));
        }
        if self.lowfps.d.is_empty() || self.lowfps.d.contains(&0) {
            return Err(CliError::Config("lowfps.d: values must be >= 1".into()));
        }
        if self.synth.normal_speed == 0 || self.synth.anomaly_speed == Some(0) {
            return Err(CliError::Config("synth: speeds must be >= 1".into()));
        }
        if self.synth.switch_at >= self.synth.length {
            return Err(CliError::Config("synth.switch_at: must be less than synth.length".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn preset_table(name: &str) -> Result<Value, CliError> {
    let model = ModelConfig::preset(name).map_err(|e| CliError::Config(e.to_string()))?;
    let mut t = Table::new();
    t.insert("model".into(), Value::try_from(model.clone()).map_err(|e| CliError::Config(e.to_string()))?);
    let metric = if name == "avenue" { Metric::LatentMse } else { Metric::LatentCosine };
    let mut scoring = Table::new();
    scoring.insert("metric".into(), Value::String(metric.as_str().into()));
    t.insert("scoring".into(), Value::Table(scoring));
    if name == "moving_mnist" {
        let mut synth = Table::new();
        synth.insert("canvas".into(), Value::try_from((model.input_size.0, model.input_size.1)).expect("pair"));
        t.insert("synth".into(), Value::Table(synth));
    }
    Ok(Value::Table(t))
}

/// Recursive merge: tables merge key by key, anything else is replaced.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted key such as `scoring.window` in an override table.
pub fn set_path(table: &mut Table, path: &str, value: Value) {
    let mut parts = path.split('.').peekable();
    let mut cur = table;
    while let Some(p) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(p.to_string(), value);
            return;
        }
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("override paths only nest tables");
    }
}
