//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! `cargo test -p latentvad --test acceptance -- 1 7` runs a subset.

use latentvad::data::{
    compute_background, generate_moving_objects, make_samples, Direction, DistortionSpec, NormalSet, ObjectKind,
    RainLevel, SyntheticSpec,
};
use latentvad::evaluation::{
    evaluate_videos, frame_auc, movingmnist_experiment, prepare_video, AnomalyAxis, EvalOptions, LabeledScores,
    MnistExperiment, MnistRun, RawVideo,
};
use latentvad::model::{LatentCode, Model, ModelConfig};
use latentvad::nn::{Adam, Tensor};
use latentvad::scoring::{latent_cosine, latent_mse, normalize_scores, score_video, Metric};
use latentvad::streaming::{benchmark, StreamMode, StreamState};
use latentvad::training::{gradient_check, train_step, LossWeights, TrainSchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

const METRIC_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-9;
const AUC_ORACLE_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-3;
const GRAD_PARAMS: usize = 50;
const OVERFIT_FACTOR: f64 = 10.0;
const OVERFIT_STEPS: usize = 200;
const STREAM_TOL: f64 = 1e-5;
const MNIST_MIN_AUC: f64 = 0.80;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

fn code(v: Vec<f64>) -> LatentCode {
    let n = v.len();
    LatentCode { values: Tensor::from_vec(&[n, 1, 1], v) }
}

fn metric_suite() -> Outcome {
    let a = code(vec![0.3, -1.2, 2.0, 0.7]);
    let shifted = code(a.as_slice().iter().map(|x| x + 1.0).collect());
    let neg = code(a.as_slice().iter().map(|x| -x).collect());
    let cases = [
        ("mse identity", latent_mse(&a, &a).unwrap(), 0.0),
        ("mse +1 offset", latent_mse(&a, &shifted).unwrap(), 1.0),
        ("cosine identity", latent_cosine(&a, &a).unwrap(), 0.0),
        ("cosine antiparallel", latent_cosine(&a, &neg).unwrap(), 2.0),
        (
            "cosine orthogonal",
            latent_cosine(&code(vec![1.0, 0.0, 2.0, 0.0]), &code(vec![0.0, 3.0, 0.0, -1.0])).unwrap(),
            1.0,
        ),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let bad: Vec<_> = cases.iter().filter(|(_, g, w)| (g - w).abs() > METRIC_TOL).map(|c| c.0).collect();
    check(bad.is_empty(), format!("5 cases, max error {worst:.1e}"), format!("failed: {bad:?}"))
}

fn normalization_suite() -> Outcome {
    let ex = normalize_scores(&[2.0, 4.0, 6.0], None);
    if ex.iter().zip([0.0, 0.5, 1.0]).any(|(g, w)| (g - w).abs() > NORM_TOL) {
        return Err(format!("[2,4,6] -> {ex:?}"));
    }
    if normalize_scores(&[3.5; 7], None).iter().any(|&v| v != 0.0) {
        return Err("constant series not mapped to zeros".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..120);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let a = rng.gen_range(0.01..100.0);
        let b = rng.gen_range(-50.0..50.0);
        let moved: Vec<f64> = raw.iter().map(|x| a * x + b).collect();
        for window in [None, Some(rng.gen_range(1..40))] {
            let p = normalize_scores(&raw, window);
            let q = normalize_scores(&moved, window);
            for (x, y) in p.iter().zip(&q) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    check(
        worst <= NORM_TOL,
        format!("examples exact, 1000 affine series max deviation {worst:.1e}"),
        format!("affine deviation {worst:.1e} > {NORM_TOL:.0e}"),
    )
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 1000 {
        let n = rng.gen_range(2..=200);
        // a small value alphabet forces plenty of ties
        let levels = rng.gen_range(2..30);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.25).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_bool(0.3) as u8).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        let got = frame_auc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        worst = worst.max((got - pairwise_auc(&scores, &labels)).abs());
        done += 1;
    }
    check(
        worst <= AUC_ORACLE_TOL,
        format!("1000 series, max |rank - pairwise| {worst:.1e}"),
        format!("max deviation {worst:.1e}"),
    )
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_size: (16, 16),
        k: 4,
        encoder_blocks: 2,
        base_channels: 4,
        latent_channels: 8,
        t_offset: 2,
        motion_blocks: 2,
        leaky_slope: 0.2,
    }
}

/// Normal moving-glyph frames, background-subtracted, at the model's input size.
fn glyph_frames(cfg: &ModelConfig, length: usize, seed: u64) -> (RawVideo, latentvad::data::BackgroundModel) {
    let spec = SyntheticSpec {
        canvas: cfg.input_size,
        object_size: cfg.input_size.0 * 7 / 16,
        objects: ObjectKind::digits(&[4, 7]),
        speed: 2,
        direction: Direction::Either,
        sequence_length: length,
        seed,
        start: None,
    };
    let normal = NormalSet { objects: spec.objects.clone(), speeds: vec![2] };
    let v = generate_moving_objects(&spec, &normal).unwrap();
    let bg = compute_background(v.frames.iter()).unwrap();
    (RawVideo { id: format!("glyph_{seed}"), frames: v.frames, labels: v.labels }, bg)
}

fn gradient_suite() -> Outcome {
    let cfg = tiny_config();
    let model = Model::new(cfg.clone(), 11).map_err(|e| e.to_string())?;
    let (video, bg) = glyph_frames(&cfg, 12, 4);
    let frames = prepare_video(&video, 0, &bg, cfg.input_size, None).map_err(|e| e.to_string())?;
    let samples = make_samples(&frames, cfg.k, cfg.t_offset, 1);
    let batch = [&samples[0], &samples[3]];
    let mut worst = 0.0f64;
    let mut n = 0;
    for (i, w) in [LossWeights::PHASE1, LossWeights::PHASE2].iter().enumerate() {
        let report = gradient_check(&model, &batch, w, GRAD_PARAMS, 1e-5, 1e-6, 7 + i as u64).map_err(|e| e.to_string())?;
        n += report.len();
        worst = report.iter().map(|g| g.rel_error).fold(worst, f64::max);
    }
    check(
        worst <= GRAD_TOL && n >= 2 * GRAD_PARAMS,
        format!("{n} parameters over both phase weightings, max rel error {worst:.2e}"),
        format!("{n} parameters, max rel error {worst:.2e} > {GRAD_TOL:.0e}"),
    )
}

fn shape_contracts() -> Outcome {
    let expect: [(&str, [usize; 2], usize); 3] = [("ucsd_ped2", [8, 12], 4), ("ucsd_ped1", [4, 6], 5), ("avenue", [8, 14], 4)];
    let mut lines = Vec::new();
    for (name, hw, blocks) in expect {
        let cfg = ModelConfig::preset(name).map_err(|e| e.to_string())?;
        let model = Model::new(cfg.clone(), 0).map_err(|e| e.to_string())?;
        let frame = latentvad::data::FrameTensor {
            pixels: Tensor::zeros(&cfg.frame_shape()),
            frame_index: 0,
            video_id: Arc::from("z"),
        };
        let (z, _) = model.encode(&frame).map_err(|e| e.to_string())?;
        let want = [cfg.latent_channels, hw[0], hw[1]];
        if cfg.encoder_blocks != blocks || z.shape() != want || cfg.latent_shape() != want {
            return Err(format!("{name}: latent {:?}, expected {want:?}", z.shape()));
        }
        let codes: Vec<&LatentCode> = std::iter::repeat(&z).take(cfg.k).collect();
        let pred = model.predict_latent(&codes).map_err(|e| e.to_string())?;
        if pred.shape() != want {
            return Err(format!("{name}: prediction {:?}", pred.shape()));
        }
        let mut t = vec![cfg.k];
        t.extend(cfg.motion_temporal_sizes());
        let collapse: &[usize] = if cfg.k == 8 { &[8, 4, 2, 1] } else { &[6, 3, 2, 1] };
        if t != collapse {
            return Err(format!("{name}: temporal sizes {t:?}"));
        }
        lines.push(format!("{name} {}x{}x{} k{}", want[0], want[1], want[2], t.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("-")));
    }
    Ok(lines.join(", "))
}

fn overfit_one_batch() -> Outcome {
    let cfg = ModelConfig { input_size: (32, 32), base_channels: 8, latent_channels: 16, ..tiny_config() };
    let (video, bg) = glyph_frames(&cfg, 20, 9);
    let frames = prepare_video(&video, 0, &bg, cfg.input_size, None).map_err(|e| e.to_string())?;
    let samples = make_samples(&frames, cfg.k, cfg.t_offset, 1);
    let batch: Vec<_> = samples.iter().step_by(3).take(4).collect();
    let mut model = Model::new(cfg, 5).map_err(|e| e.to_string())?;
    let mut opt = Adam::default();
    let w = LossWeights::PHASE1;
    let first = train_step(&mut model, &mut opt, &batch, &w, 1e-3).map_err(|e| e.to_string())?.recon_term;
    let mut best = first;
    let mut reached = None;
    for step in 1..=OVERFIT_STEPS {
        let r = train_step(&mut model, &mut opt, &batch, &w, 1e-3).map_err(|e| e.to_string())?;
        best = best.min(r.recon_term);
        if reached.is_none() && r.recon_term * OVERFIT_FACTOR <= first {
            reached = Some(step);
            break;
        }
    }
    match reached {
        Some(s) => Ok(format!("recon {first:.4} -> {best:.5} ({:.1}x) after {s} steps", first / best)),
        None => Err(format!("recon {first:.4} -> {best:.5} ({:.1}x) in {OVERFIT_STEPS} steps", first / best)),
    }
}

fn streaming_equivalence() -> Outcome {
    let cfg = ModelConfig { input_size: (32, 32), base_channels: 8, latent_channels: 16, ..tiny_config() };
    let model = Model::new(cfg.clone(), 13).map_err(|e| e.to_string())?;
    let (video, bg) = glyph_frames(&cfg, 200, 21);
    let frames = prepare_video(&video, 0, &bg, cfg.input_size, None).map_err(|e| e.to_string())?;
    let id: Arc<str> = Arc::from(video.id.as_str());
    let mut worst = 0.0f64;
    for metric in [Metric::LatentMse, Metric::LatentCosine] {
        let batch = score_video(&model, &frames, &[metric], 1, None).map_err(|e| e.to_string())?.remove(0);
        let mut st = StreamState::new(&model, metric, StreamMode::Cached, None).map_err(|e| e.to_string())?;
        let mut streamed = Vec::new();
        for (i, raw) in video.frames.iter().enumerate() {
            if let Some(s) = st.push_raw(raw, &bg, i, &id).map_err(|e| e.to_string())? {
                streamed.push(s);
            }
        }
        if st.encode_counter() != video.frames.len() {
            return Err(format!("{metric}: encode_counter {} for {} frames", st.encode_counter(), video.frames.len()));
        }
        if streamed.len() != batch.raw_scores.len() {
            return Err(format!("{metric}: {} streamed vs {} batch scores", streamed.len(), batch.raw_scores.len()));
        }
        for (s, (idx, raw)) in streamed.iter().zip(batch.frame_indices.iter().zip(&batch.raw_scores)) {
            if s.frame_index != *idx {
                return Err(format!("{metric}: frame {} vs {idx}", s.frame_index));
            }
            worst = worst.max((s.raw_score - raw).abs());
        }
    }
    if worst > STREAM_TOL {
        return Err(format!("max stream/batch deviation {worst:.1e}"));
    }
    let bench = benchmark(&model, Metric::LatentCosine, &video.frames, &bg, 10).map_err(|e| e.to_string())?;
    check(
        bench.cached.fps > bench.naive.fps,
        format!(
            "max deviation {worst:.1e}, encode_counter 200/200, cached {:.0} fps vs naive {:.0} fps",
            bench.cached.fps, bench.naive.fps
        ),
        format!("cached {:.1} fps not faster than naive {:.1} fps", bench.cached.fps, bench.naive.fps),
    )
}

/// The calibrated desk-scale moving-digit experiment; seeds pinned after one calibration pass.
fn pinned_experiment() -> MnistExperiment {
    MnistExperiment {
        canvas: (32, 32),
        object_size: 14,
        normal_digits: vec![4, 7],
        normal_speed: 2,
        train_videos: 24,
        train_length: 30,
        test_videos: 6,
        test_length: 40,
        switch_at: 20,
        axes: vec![AnomalyAxis::UnseenShapes, AnomalyAxis::UnseenSpeed(4)],
        model: ModelConfig {
            input_size: (32, 32),
            k: 6,
            encoder_blocks: 3,
            base_channels: 8,
            latent_channels: 32,
            t_offset: 6,
            motion_blocks: 3,
            leaky_slope: 0.2,
        },
        schedule: TrainSchedule {
            total_epochs: 40,
            phase_switch_epoch: 20,
            lr: 1e-3,
            lr_decay_every: 20,
            seed: 1,
            ..TrainSchedule::default()
        },
        model_seed: 1,
        data_seed: 1,
        eval: EvalOptions {
            metrics: vec![Metric::LatentCosine, Metric::LatentMse, Metric::PixelPrediction],
            stride: 1,
            window: None,
        },
    }
}

const MNIST_METRIC: Metric = Metric::LatentCosine;

fn auc_of(run: &MnistRun, axis: AnomalyAxis, metric: Metric) -> Option<f64> {
    run.results.iter().find(|r| r.axis == axis)?.evals.iter().find(|e| e.metric == metric).map(|e| e.auc)
}

fn mnist_end_to_end(run: &Result<MnistRun, String>, train_secs: f64) -> Outcome {
    let run = run.as_ref().map_err(|e| e.clone())?;
    let mut parts = Vec::new();
    let mut pass = true;
    for axis in [AnomalyAxis::UnseenShapes, AnomalyAxis::UnseenSpeed(4)] {
        let auc = auc_of(run, axis, MNIST_METRIC).ok_or("axis missing")?;
        pass &= auc >= MNIST_MIN_AUC;
        let others: Vec<String> = [Metric::LatentMse, Metric::PixelPrediction]
            .iter()
            .filter_map(|&m| auc_of(run, axis, m).map(|a| format!("{m} {a:.3}")))
            .collect();
        parts.push(format!("{axis} {MNIST_METRIC} {auc:.3} ({})", others.join(", ")));
    }
    let msg = format!("{} (threshold {MNIST_MIN_AUC}, trained in {train_secs:.0}s)", parts.join("; "));
    check(pass, msg.clone(), msg)
}

fn robustness_direction(run: &Result<MnistRun, String>, exp: &MnistExperiment) -> Outcome {
    let run = run.as_ref().map_err(|e| e.clone())?;
    let videos: Vec<RawVideo> = run.test_sets.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
    let opts = EvalOptions { metrics: vec![MNIST_METRIC, Metric::PixelPrediction], ..exp.eval.clone() };
    let aucs = |rain: RainLevel| -> Result<(f64, f64), String> {
        let spec = DistortionSpec::new(0.5, 0.0, rain).map_err(|e| e.to_string())?;
        let evals = evaluate_videos(&run.model, &run.background, &videos, &opts, Some((&spec, 7))).map_err(|e| e.to_string())?;
        Ok((evals[0].auc, evals[1].auc))
    };
    let (latent, pixel) = aucs(RainLevel::Heavy)?;
    // brightness alone is reported for context, not asserted
    let (dim_latent, dim_pixel) = aucs(RainLevel::None)?;
    let msg = format!(
        "brightness 0.5 + heavy rain: {MNIST_METRIC} {latent:.3} vs pixel_prediction {pixel:.3} \
         (brightness 0.5 only: {dim_latent:.3} vs {dim_pixel:.3})"
    );
    check(latent >= pixel, msg.clone(), msg)
}

fn main() {
    // optional criterion numbers as arguments select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let started = Instant::now();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(m) => println!("[PASS] {n} {name}: {m} [{secs:.1}s]"),
            Err(m) => {
                failures += 1;
                println!("[FAIL] {n} {name}: {m} [{secs:.1}s]");
            }
        }
    };
    report(1, "metric unit suite", &metric_suite);
    report(2, "normalization suite", &normalization_suite);
    report(3, "AUC oracle equivalence", &auc_oracle);
    report(4, "gradient check", &gradient_suite);
    report(5, "shape contracts", &shape_contracts);
    report(6, "overfit one batch", &overfit_one_batch);
    report(7, "streaming/batch equivalence", &streaming_equivalence);
    if wanted(8) || wanted(9) {
        let exp = pinned_experiment();
        let t = Instant::now();
        let run = movingmnist_experiment(&exp, None).map_err(|e| e.to_string());
        let train_secs = t.elapsed().as_secs_f64();
        report(8, "moving-digit end-to-end", &|| mnist_end_to_end(&run, train_secs));
        report(9, "robustness direction", &|| robustness_direction(&run, &exp));
    }
    println!("acceptance: {} failed, total {:.0}s", failures, started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
