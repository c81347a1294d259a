//! Joint reconstruction + latent-prediction objective, two-phase weighting and
//! the Adam training loop.
//!
//! Per-term means make the loss weights resolution independent:
//!
//! ```text
//! total = λr · mean_q mean_px (T̂_q − T_q)² + λp · mean_m (ẑ_t − z_t)² + γ · Σ W²
//! ```
//!
//! `z_t` is encoded with the batch statistics of the input pass and treated as
//! a constant target.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BackgroundModel, SequenceSample};
use crate::error::{Error, Result};
use crate::model::motion::{stack_time, unstack_time};
use crate::model::{save_checkpoint, Model, Norm};
use crate::nn::{Adam, Parameterized, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub const GAMMA: f64 = 0.001;

    /// Reconstruction-dominant bootstrap weights.
    pub const PHASE1: Self = Self {
        lambda_r: 1.0,
        lambda_p: 0.001,
        gamma: Self::GAMMA,
    };

    /// Prediction-dominant fine-tuning weights.
    pub const PHASE2: Self = Self {
        lambda_r: 0.001,
        lambda_p: 1.0,
        gamma: Self::GAMMA,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = [self.lambda_r, self.lambda_p, self.gamma]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub recon_term: f64,
    pub prediction_term: f64,
    pub reg_term: f64,
    pub total: f64,
    pub epoch: usize,
    pub step: usize,
}

/// Switch to phase 2 early when the reconstruction term stops improving.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// Minimum relative improvement per epoch.
    pub min_rel_improvement: f64,
    pub patience: usize,
}

impl Default for Plateau {
    fn default() -> Self {
        Self {
            min_rel_improvement: 0.01,
            patience: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub total_epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub phase_switch_epoch: usize,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    pub phase1_weights: LossWeights,
    pub phase2_weights: LossWeights,
    pub batch_size: usize,
    pub seed: u64,
    /// Write `epoch_NNN.ckpt` every this many epochs (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_epochs: 50,
            lr: 1e-4,
            lr_decay: 0.1,
            lr_decay_every: 20,
            phase_switch_epoch: 25,
            plateau: None,
            phase1_weights: LossWeights::PHASE1,
            phase2_weights: LossWeights::PHASE2,
            batch_size: 8,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::Config("total_epochs must be positive".into()));
        }
        if !(self.phase_switch_epoch > 0 && self.phase_switch_epoch < self.total_epochs) {
            return Err(Error::Config(format!(
                "phase_switch_epoch must satisfy 0 < {} < total_epochs = {}",
                self.phase_switch_epoch, self.total_epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr must be positive and lr_decay in (0, 1]".into()));
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 {
            return Err(Error::Config("lr_decay_every and batch_size must be positive".into()));
        }
        self.phase1_weights.validate()?;
        self.phase2_weights.validate()
    }

    /// Step decay: `lr · decay^(epoch / every)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }

    /// Weights for `epoch` under the fixed switch epoch.
    pub fn weights_at(&self, epoch: usize) -> LossWeights {
        if epoch < self.phase_switch_epoch {
            self.phase1_weights
        } else {
            self.phase2_weights
        }
    }
}

/// Forward values of one training batch.
pub struct BatchForward {
    pub report: LossReport,
    /// Decoder outputs for frames 2..=k of every sequence, `[S·(k-1), 3, H, W]`.
    pub reconstructions: Tensor,
    /// The frames the reconstructions are compared to, same layout.
    pub recon_targets: Tensor,
    /// Predicted latents `ẑ_t`, `[S, C, h, w]`.
    pub predictions: Tensor,
    /// Prediction targets `z_t`, `[S, C, h, w]`.
    pub targets: Tensor,
}

fn stack_frames<'a>(frames: impl Iterator<Item = &'a Tensor>) -> Tensor {
    let items: Vec<&Tensor> = frames.collect();
    Tensor::stack(&items)
}

fn mse(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn mse_grad(a: &Tensor, b: &Tensor, weight: f64) -> Tensor {
    let scale = 2.0 * weight / a.len() as f64;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| scale * (x - y)).collect();
    Tensor::from_vec(a.shape(), data)
}

fn check_batch(model: &Model, batch: &[&SequenceSample]) -> Result<()> {
    let cfg = model.config();
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    for s in batch {
        if s.k() != cfg.k {
            return Err(Error::Invalid(format!("sample has {} inputs, model k = {}", s.k(), cfg.k)));
        }
        for f in s.inputs.iter().chain(std::iter::once(&s.future_target)) {
            if f.pixels.shape() != cfg.frame_shape() {
                return Err(Error::shape(&cfg.frame_shape(), f.pixels.shape()));
            }
        }
    }
    Ok(())
}

/// Loss over a batch and, when `backprop`, gradients accumulated into `model`.
///
/// With `fixed_targets`, those are used as `z_t` instead of encoding the
/// future frames; finite-difference checks use this to hold the target constant.
pub fn batch_loss(
    model: &mut Model,
    batch: &[&SequenceSample],
    weights: &LossWeights,
    fixed_targets: Option<&Tensor>,
    backprop: bool,
) -> Result<BatchForward> {
    check_batch(model, batch)?;
    let k = model.config().k;
    let blocks = model.config().encoder_blocks;
    let seqs = batch.len();

    let x = stack_frames(batch.iter().flat_map(|s| s.inputs.iter().map(|f| &f.pixels)));
    let (levels, enc_cache) = model.encoder.forward(&x, Norm::Batch);
    let enc_stats = enc_cache.stats();

    let cur: Vec<usize> = (0..seqs).flat_map(|s| (1..k).map(move |q| s * k + q)).collect();
    let prev: Vec<usize> = cur.iter().map(|i| i - 1).collect();
    let latent_cur = levels[blocks - 1].gather(&cur);
    let prev_pyr: Vec<Tensor> = levels.iter().map(|l| l.gather(&prev)).collect();
    let (recon, dec_cache) = model.decoder.forward(&latent_cur, &prev_pyr, Norm::Batch);
    let recon_target = x.gather(&cur);
    let recon_term = mse(&recon, &recon_target);

    let stack = stack_time(&levels[blocks - 1], k);
    let (pred, mot_cache) = model.motion.forward(&stack, Norm::Batch);
    let targets = match fixed_targets {
        Some(t) => {
            if t.shape() != pred.shape() {
                return Err(Error::shape(pred.shape(), t.shape()));
            }
            t.clone()
        }
        None => {
            let future = stack_frames(batch.iter().map(|s| &s.future_target.pixels));
            model
                .encoder
                .infer(&future, Norm::Fixed(&enc_stats))
                .pop()
                .expect("at least one level")
        }
    };
    let prediction_term = mse(&pred, &targets);
    let reg_term = model.weight_sq_norm();

    for (term, v) in [("reconstruction", recon_term), ("prediction", prediction_term), ("regularization", reg_term)] {
        if !v.is_finite() {
            return Err(Error::NonFiniteLoss { term });
        }
    }
    let total = weights.lambda_r * recon_term + weights.lambda_p * prediction_term + weights.gamma * reg_term;
    let report = LossReport {
        recon_term,
        prediction_term,
        reg_term,
        total,
        epoch: 0,
        step: 0,
    };

    if backprop {
        let mut level_grads: Vec<Option<Tensor>> = vec![None; blocks];
        if weights.lambda_r > 0.0 {
            let d_recon = mse_grad(&recon, &recon_target, weights.lambda_r);
            let g = model.decoder.backward(&dec_cache, &d_recon);
            for (l, d_prev) in g.pyramid.iter().enumerate() {
                let mut acc = Tensor::zeros(levels[l].shape());
                acc.scatter_add(&prev, d_prev);
                if l == blocks - 1 {
                    acc.scatter_add(&cur, &g.latent);
                }
                level_grads[l] = Some(acc);
            }
        }
        if weights.lambda_p > 0.0 {
            let d_pred = mse_grad(&pred, &targets, weights.lambda_p);
            let d_stack = model.motion.backward(&mot_cache, &d_pred);
            let d_latent = unstack_time(&d_stack);
            match level_grads[blocks - 1].as_mut() {
                Some(acc) => acc.add_assign(&d_latent),
                None => level_grads[blocks - 1] = Some(d_latent),
            }
        }
        if level_grads.iter().any(Option::is_some) {
            model.encoder.backward(&enc_cache, level_grads);
        }
        if weights.gamma > 0.0 {
            let g2 = 2.0 * weights.gamma;
            model.visit_mut("", &mut |_, p| {
                if p.trainable {
                    for (g, w) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                        *g += g2 * w;
                    }
                }
            });
        }
        model.encoder.update_running_stats(&enc_cache);
        model.decoder.update_running_stats(&dec_cache);
        model.motion.update_running_stats(&mot_cache);
    }
    Ok(BatchForward {
        report,
        reconstructions: recon,
        recon_targets: recon_target,
        predictions: pred,
        targets,
    })
}

/// Loss of a single sample (a batch of one).
pub fn compute_loss(model: &mut Model, sample: &SequenceSample, weights: &LossWeights) -> Result<LossReport> {
    let probe = &mut model.clone();
    Ok(batch_loss(probe, &[sample], weights, None, false)?.report)
}

/// One optimizer step on `batch`; returns the pre-update loss.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &[&SequenceSample],
    weights: &LossWeights,
    lr: f64,
) -> Result<LossReport> {
    model.zero_grad();
    let fwd = batch_loss(model, batch, weights, None, true)?;
    opt.step(model, lr);
    Ok(fwd.report)
}

/// Analytic vs central-difference comparison for one scalar parameter.
#[derive(Clone, Debug)]
pub struct GradSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Compare backprop gradients of the full loss against central differences.
///
/// `z_t` is computed once at the unperturbed weights and held fixed, which is
/// what the stop-gradient means. Relative error is
/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps exactly-zero gradients
/// (e.g. conv biases cancelled by a following batch norm) from dividing by zero.
pub fn gradient_check(
    model: &Model,
    batch: &[&SequenceSample],
    weights: &LossWeights,
    n_params: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> Result<Vec<GradSample>> {
    let mut m = model.clone();
    m.zero_grad();
    let fwd = batch_loss(&mut m, batch, weights, None, true)?;
    let targets = fwd.targets;

    let mut tensors: Vec<(String, usize)> = Vec::new();
    m.visit("", &mut |name, p| {
        if p.trainable {
            tensors.push((name.to_string(), p.value.len()));
        }
    });
    // every trainable tensor at least once, the rest uniformly over all scalars
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = tensors
        .iter()
        .enumerate()
        .map(|(t, (_, len))| (t, rand::Rng::gen_range(&mut rng, 0..*len)))
        .collect();
    let total: usize = tensors.iter().map(|(_, l)| l).sum();
    while picks.len() < n_params {
        let mut flat = rand::Rng::gen_range(&mut rng, 0..total);
        let mut t = 0;
        while flat >= tensors[t].1 {
            flat -= tensors[t].1;
            t += 1;
        }
        picks.push((t, flat));
    }

    let eval = |delta: f64, t: usize, i: usize| -> Result<f64> {
        let mut probe = model.clone();
        let target = &tensors[t].0;
        probe.visit_mut("", &mut |name, p| {
            if name == target {
                p.value.data_mut()[i] += delta;
            }
        });
        Ok(batch_loss(&mut probe, batch, weights, Some(&targets), false)?.report.total)
    };
    let mut out = Vec::with_capacity(picks.len());
    for (t, i) in picks {
        let mut analytic = 0.0;
        m.visit("", &mut |name, p| {
            if name == tensors[t].0 {
                analytic = p.grad.data()[i];
            }
        });
        let numeric = (eval(step, t, i)? - eval(-step, t, i)?) / (2.0 * step);
        let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        out.push(GradSample {
            param: tensors[t].0.clone(),
            index: i,
            analytic,
            numeric,
            rel_error,
        });
    }
    Ok(out)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean loss per epoch.
    pub epochs: Vec<LossReport>,
    /// Epoch at which phase 2 weights took effect.
    pub switched_at: usize,
    pub checkpoints: Vec<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Artifacts of a training run written under `dir`.
pub struct RunOutput<'a> {
    pub dir: &'a Path,
    pub background: Option<&'a BackgroundModel>,
}

pub const LOSS_CSV_HEADER: &str = "epoch,step,recon,pred,reg,total,lr,lambda_r,lambda_p";

pub fn train(
    samples: &[SequenceSample],
    mut model: Model,
    schedule: &TrainSchedule,
    out: Option<RunOutput<'_>>,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    if samples.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = Adam::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epochs = Vec::with_capacity(schedule.total_epochs);
    let mut step = 0;
    let mut switched_at = schedule.phase_switch_epoch;
    let mut stalled = 0;
    let mut best: Option<f64> = None;
    let mut checkpoints = Vec::new();
    let mut best_checkpoint = None;
    let mut last_good: Option<PathBuf> = None;

    let mut log = match &out {
        Some(o) => {
            fs::create_dir_all(o.dir).map_err(|e| Error::io(o.dir, e))?;
            let path = o.dir.join("loss.csv");
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&path, e))?;
            Some((f, path))
        }
        None => None,
    };
    let save = |model: &Model, name: &str, epoch: usize| -> Result<Option<PathBuf>> {
        let Some(o) = &out else { return Ok(None) };
        let path = o.dir.join(name);
        let mut meta = BTreeMap::new();
        meta.insert("epoch".to_string(), serde_json::json!(epoch));
        save_checkpoint(&path, model, o.background, &meta)?;
        Ok(Some(path))
    };

    for epoch in 0..schedule.total_epochs {
        let phase2 = epoch >= switched_at;
        let weights = if phase2 { schedule.phase2_weights } else { schedule.phase1_weights };
        let lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossReport::default();
        let mut batches = 0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<&SequenceSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let r = match train_step(&mut model, &mut opt, &batch, &weights, lr) {
                Ok(r) => r,
                Err(Error::NonFiniteLoss { term }) => {
                    warn!("non-finite {term} loss at epoch {epoch}");
                    return Err(Error::Diverged { epoch, last_good });
                }
                Err(e) => return Err(e),
            };
            step += 1;
            batches += 1;
            sum.recon_term += r.recon_term;
            sum.prediction_term += r.prediction_term;
            sum.reg_term += r.reg_term;
            sum.total += r.total;
        }
        let n = batches as f64;
        let report = LossReport {
            recon_term: sum.recon_term / n,
            prediction_term: sum.prediction_term / n,
            reg_term: sum.reg_term / n,
            total: sum.total / n,
            epoch,
            step,
        };
        info!(
            "epoch {epoch}: recon {:.5} pred {:.5} total {:.5} lr {lr:.1e}",
            report.recon_term, report.prediction_term, report.total
        );
        if let Some((f, path)) = log.as_mut() {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{}",
                epoch,
                step,
                report.recon_term,
                report.prediction_term,
                report.reg_term,
                report.total,
                lr,
                weights.lambda_r,
                weights.lambda_p
            )
            .map_err(|e| Error::io(path.as_path(), e))?;
        }

        // plateau detection on the reconstruction term during phase 1
        if let (false, Some(p), Some(prev)) = (phase2, schedule.plateau, epochs.last()) {
            let prev: &LossReport = prev;
            let rel = (prev.recon_term - report.recon_term) / prev.recon_term.abs().max(f64::MIN_POSITIVE);
            stalled = if rel < p.min_rel_improvement { stalled + 1 } else { 0 };
            if stalled >= p.patience && epoch + 1 < switched_at {
                info!("reconstruction plateaued; switching to phase 2 at epoch {}", epoch + 1);
                switched_at = epoch + 1;
            }
        }
        if epoch + 1 == switched_at {
            // totals under different weights are not comparable
            best = None;
        }
        if best.is_none_or(|b| report.total < b) && !(epoch + 1 == switched_at) {
            best = Some(report.total);
            if let Some(p) = save(&model, "best.ckpt", epoch)? {
                best_checkpoint = Some(p);
            }
        }
        if schedule.checkpoint_every > 0 && (epoch + 1) % schedule.checkpoint_every == 0 {
            if let Some(p) = save(&model, &format!("epoch_{epoch:03}.ckpt"), epoch)? {
                checkpoints.push(p.clone());
                last_good = Some(p);
            }
        }
        epochs.push(report);
    }
    if let Some(p) = save(&model, "last.ckpt", schedule.total_epochs - 1)? {
        checkpoints.push(p);
    }
    Ok(TrainOutcome {
        model,
        epochs,
        switched_at,
        checkpoints,
        best_checkpoint,
    })
}
