use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::{Rgb, RgbImage};
use latentvad::data::io::{list_videos, read_labels, write_labels, write_video_frames, LabelMap, VideoEntry, VideoSource, Y4mFrames};
use latentvad::data::{
    generate_scenario, make_samples, preprocess, BackgroundAccumulator, BackgroundModel, FloatImage, NormalSet, Switch, SyntheticSpec,
};
use latentvad::evaluation::plot::{line_plot, save_rgb};
use latentvad::evaluation::{
    evaluate_videos, frame_auc, lowfps_experiment, movingmnist_experiment, multi_run_auc, robustness_sweep, write_sweep_csv, EvalOptions,
    LabeledScores, MnistExperiment, RawVideo, SweepResult,
};
use latentvad::model::{load_checkpoint, Checkpoint, Model};
use latentvad::scoring::{write_regions_csv, write_scores_csv, EncodedVideo, Metric, Region, SCORES_CSV_HEADER, REGIONS_CSV_HEADER};
use latentvad::streaming::{benchmark, StreamMode, StreamState};
use latentvad::training::{train as train_model, RunOutput};
use log::{info, warn};

use crate::config::RunConfig;
use crate::manifest::{sha256_hex, Run};
use crate::CliError;

fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    let p = value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{what} is required")))?;
    if !p.exists() {
        return Err(CliError::Config(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn require_one_checkpoint(ckpts: &[PathBuf]) -> Result<&Path, CliError> {
    match ckpts {
        [one] if one.exists() => Ok(one),
        [one] => Err(CliError::Config(format!("checkpoint {} does not exist", one.display()))),
        _ => Err(CliError::Config(format!("exactly one --checkpoint is required, got {}", ckpts.len()))),
    }
}

fn open_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Checkpoint, CliError> {
    let ck = load_checkpoint(path)?;
    if cfg.model_explicit && ck.model.config().input_size != cfg.model.input_size {
        let (a, b) = (ck.model.config().input_size, cfg.model.input_size);
        return Err(CliError::Config(format!(
            "checkpoint expects {}x{} frames but the configuration asks for {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(ck)
}

fn background(ck: &Checkpoint) -> BackgroundModel {
    ck.background.clone().unwrap_or_else(|| {
        warn!("checkpoint has no background model; using a zero background");
        let (h, w) = ck.model.config().input_size;
        BackgroundModel::zeros(h, w)
    })
}

fn load_labeled(dir: &Path, labels: &LabelMap) -> Result<Vec<RawVideo>, CliError> {
    let mut out = Vec::new();
    for v in list_videos(dir)? {
        let frames = v.load_frames()?;
        let l = labels
            .get(&v.id)
            .ok_or_else(|| CliError::Config(format!("no labels for video {}", v.id)))?;
        if l.len() != frames.len() {
            return Err(CliError::Config(format!(
                "video {} has {} frames but {} labels",
                v.id,
                frames.len(),
                l.len()
            )));
        }
        out.push(RawVideo { id: v.id, frames, labels: l.clone() });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("no videos under {}", dir.display())));
    }
    Ok(out)
}

fn load_unlabeled(dir: &Path) -> Result<Vec<RawVideo>, CliError> {
    let mut out = Vec::new();
    for v in list_videos(dir)? {
        let frames = v.load_frames()?;
        out.push(RawVideo { labels: vec![0; frames.len()], id: v.id, frames });
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("no videos under {}", dir.display())));
    }
    Ok(out)
}

fn eval_options(cfg: &RunConfig, metrics: Vec<Metric>) -> EvalOptions {
    EvalOptions { metrics, stride: cfg.scoring.stride, window: cfg.scoring.window() }
}

fn write_csv<F>(run: &mut Run, name: &str, f: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(name, e))?;
    run.write_file(name, &buf)
}

fn plot_to(run: &mut Run, name: &str, series: &[Vec<(f64, f64)>]) -> Result<(), CliError> {
    let path = run.path(name);
    save_rgb(&line_plot(series, 480, 240), &path)?;
    run.output(path);
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = require(&cfg.data.train, "data.train (--train-dir)")?;
    let videos = list_videos(dir)?;
    if videos.is_empty() {
        return Err(CliError::Config(format!("no videos under {}", dir.display())));
    }
    let mut run = Run::start("train", cfg)?;
    let (h, w) = cfg.model.input_size;
    let mut acc = BackgroundAccumulator::default();
    let mut raw = Vec::with_capacity(videos.len());
    for v in &videos {
        let frames: Vec<FloatImage> = v.load_frames()?.iter().map(|f| f.resize_bilinear(h, w)).collect();
        for f in &frames {
            acc.push(f)?;
        }
        raw.push((v.id.clone(), frames));
    }
    let bg = acc.finish()?;
    let mut samples = Vec::new();
    for (id, frames) in &raw {
        let id: Arc<str> = Arc::from(id.as_str());
        let tensors = frames
            .iter()
            .enumerate()
            .map(|(i, f)| preprocess(f, &bg, (h, w), i, &id).map(Arc::new))
            .collect::<latentvad::Result<Vec<_>>>()?;
        samples.extend(make_samples(&tensors, cfg.model.k, cfg.model.t_offset, cfg.scoring.stride));
    }
    info!("{} training samples from {} videos", samples.len(), raw.len());
    if samples.is_empty() {
        return Err(latentvad::Error::NoTrainingFrames.into());
    }
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let outcome = train_model(&samples, model, &cfg.schedule, Some(RunOutput { dir: &run.dir, background: Some(&bg) }))?;
    for c in &outcome.checkpoints {
        run.checkpoint(c);
    }
    if let Some(best) = &outcome.best_checkpoint {
        run.checkpoint(best);
    }
    run.output(run.path("loss.csv"));
    if cfg.plots {
        let curve = |f: fn(&latentvad::training::LossReport) -> f64| outcome.epochs.iter().map(|r| (r.epoch as f64, f(r))).collect();
        plot_to(&mut run, "loss.png", &[curve(|r| r.recon_term), curve(|r| r.prediction_term)])?;
    }
    if let Some(last) = outcome.epochs.last() {
        run.summary.insert("final_total_loss".into(), last.total.into());
    }
    run.summary.insert("phase_switch_epoch".into(), outcome.switched_at.into());
    run.finish()?;
    Ok(())
}

fn draw_box(img: &mut RgbImage, r: &Region) {
    let red = Rgb([255, 0, 0]);
    let (x1, y1) = (r.x + r.w - 1, r.y + r.h - 1);
    for x in r.x..=x1 {
        img.put_pixel(x as u32, r.y as u32, red);
        img.put_pixel(x as u32, y1 as u32, red);
    }
    for y in r.y..=y1 {
        img.put_pixel(r.x as u32, y as u32, red);
        img.put_pixel(x1 as u32, y as u32, red);
    }
}

pub fn score(cfg: &RunConfig, ckpts: &[PathBuf], stream: Option<&Path>) -> Result<(), CliError> {
    let ck_path = require_one_checkpoint(ckpts)?;
    if let Some(src) = stream {
        return score_stream(cfg, ck_path, src);
    }
    let dir = require(&cfg.data.test, "data.test (--test-dir)")?;
    let ck = open_checkpoint(ck_path, cfg)?;
    let bg = background(&ck);
    let videos = load_unlabeled(dir)?;
    let mut run = Run::start("score", cfg)?;
    run.checkpoint(ck_path);
    let size = ck.model.config().input_size;
    let score_dir = run.path("scores");
    fs::create_dir_all(&score_dir).map_err(|e| CliError::io(score_dir.display(), e))?;
    let mut all_regions: Vec<u8> = format!("{REGIONS_CSV_HEADER}\n").into_bytes();
    for (vi, v) in videos.iter().enumerate() {
        let frames = latentvad::evaluation::prepare_video(v, vi, &bg, size, None)?;
        let mut enc = EncodedVideo::new(&ck.model, &frames, cfg.scoring.stride)?;
        let series = enc.series(cfg.scoring.metric, cfg.scoring.window())?;
        let path = score_dir.join(format!("{}.csv", v.id));
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, std::slice::from_ref(&series)).map_err(|e| CliError::io(path.display(), e))?;
        fs::write(&path, buf).map_err(|e| CliError::io(path.display(), e))?;
        run.output(&path);
        if cfg.plots {
            let pts: Vec<(f64, f64)> = series.frame_indices.iter().zip(&series.normalized_scores).map(|(&i, &s)| (i as f64, s)).collect();
            plot_to(&mut run, &format!("scores/{}.png", v.id), &[pts])?;
        }
        if cfg.scoring.localize {
            let regions = enc.localize(cfg.scoring.localize_quantile, cfg.scoring.min_area)?;
            write_regions_csv(&mut all_regions, &v.id, &regions).map_err(|e| CliError::io("regions.csv", e))?;
            let fdir = run.path(&format!("localized/{}", v.id));
            fs::create_dir_all(&fdir).map_err(|e| CliError::io(fdir.display(), e))?;
            for (frame_index, rs) in &regions {
                let mut img = v.frames[*frame_index].resize_bilinear(size.0, size.1).to_rgb8();
                for r in rs {
                    draw_box(&mut img, r);
                }
                let p = fdir.join(format!("frame_{frame_index:06}.png"));
                save_rgb(&img, &p)?;
                run.output(p);
            }
        }
    }
    if cfg.scoring.localize {
        run.write_file("regions.csv", &all_regions)?;
    }
    run.finish()?;
    Ok(())
}

fn score_stream(cfg: &RunConfig, ck_path: &Path, src: &Path) -> Result<(), CliError> {
    let from_stdin = src == Path::new("-");
    if !from_stdin && !src.exists() {
        return Err(CliError::Config(format!("stream source {} does not exist", src.display())));
    }
    let ck = open_checkpoint(ck_path, cfg)?;
    let bg = background(&ck);
    if cfg.scoring.metric.needs_decoder() {
        return Err(CliError::Config(format!("streaming needs a latent metric, got {}", cfg.scoring.metric)));
    }
    let mut run = Run::start("score", cfg)?;
    run.checkpoint(ck_path);
    let frames: Box<dyn Iterator<Item = latentvad::Result<FloatImage>>> = if from_stdin {
        Box::new(Y4mFrames::new(BufReader::new(io::stdin().lock()))?)
    } else if src.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(src)
            .map_err(|e| CliError::io(src.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "png" || e == "jpg" || e == "jpeg"))
            .collect();
        paths.sort();
        Box::new(paths.into_iter().enumerate().map(|(i, p)| latentvad::data::io::load_image(&p, i)))
    } else {
        let file = fs::File::open(src).map_err(|e| CliError::io(src.display(), e))?;
        Box::new(Y4mFrames::new(BufReader::new(file))?)
    };
    let mut state = StreamState::new(&ck.model, cfg.scoring.metric, StreamMode::Cached, cfg.scoring.window())?;
    let id: Arc<str> = Arc::from("stream");
    let path = run.path("stream_scores.csv");
    let mut file = io::BufWriter::new(fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let header = if cfg.scoring.window().is_some() { "frame_index,raw_score,normalized" } else { "frame_index,raw_score" };
    for w in [&mut file as &mut dyn Write, &mut out] {
        writeln!(w, "{header}").map_err(|e| CliError::io("stream output", e))?;
    }
    let mut n = 0;
    for (i, frame) in frames.enumerate() {
        let frame = frame?;
        n += 1;
        if let Some(s) = state.push_raw(&frame, &bg, i, &id)? {
            let line = match s.normalized {
                Some(v) => format!("{},{},{}", s.frame_index, s.raw_score, v),
                None => format!("{},{}", s.frame_index, s.raw_score),
            };
            for w in [&mut file as &mut dyn Write, &mut out] {
                writeln!(w, "{line}").map_err(|e| CliError::io("stream output", e))?;
            }
            out.flush().map_err(|e| CliError::io("stdout", e))?;
        }
    }
    file.flush().map_err(|e| CliError::io(path.display(), e))?;
    drop(file);
    run.output(&path);
    run.summary.insert("frames".into(), n.into());
    run.summary.insert("encodes".into(), state.encode_counter().into());
    run.finish()?;
    Ok(())
}

fn read_scores_csv(path: &Path) -> Result<BTreeMap<Metric, Vec<(String, usize, f64)>>, CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let mut out: BTreeMap<Metric, Vec<(String, usize, f64)>> = BTreeMap::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path.display(), e))?;
        if n == 0 || line.trim().is_empty() || line == SCORES_CSV_HEADER {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Config(format!("{}:{}: expected {SCORES_CSV_HEADER}", path.display(), n + 1));
        if cols.len() != 5 {
            return Err(bad());
        }
        let metric: Metric = cols[4].parse().map_err(|_| bad())?;
        let frame: usize = cols[1].parse().map_err(|_| bad())?;
        let score: f64 = cols[3].parse().map_err(|_| bad())?;
        out.entry(metric).or_default().push((cols[0].to_string(), frame, score));
    }
    Ok(out)
}

pub fn eval(cfg: &RunConfig, ckpts: &[PathBuf], scores: Option<&Path>) -> Result<(), CliError> {
    let labels_path = require(&cfg.data.labels, "data.labels (--labels)")?;
    let labels = read_labels(labels_path)?;
    let mut rows = Vec::new();
    if let Some(scores) = scores {
        if !scores.exists() {
            return Err(CliError::Config(format!("scores file {} does not exist", scores.display())));
        }
        for (metric, entries) in read_scores_csv(scores)? {
            let mut data = LabeledScores::default();
            for (video, frame, score) in entries {
                let l = labels
                    .get(&video)
                    .and_then(|l| l.get(frame))
                    .ok_or_else(|| CliError::Config(format!("no label for {video} frame {frame}")))?;
                data.scores.push(score);
                data.labels.push(*l);
            }
            rows.push((metric, multi_run_auc(&[frame_auc(&data)?])?));
        }
    } else {
        if ckpts.is_empty() {
            return Err(CliError::Config("eval needs --scores or at least one --checkpoint".into()));
        }
        for c in ckpts {
            if !c.exists() {
                return Err(CliError::Config(format!("checkpoint {} does not exist", c.display())));
            }
        }
        let dir = require(&cfg.data.test, "data.test (--test-dir)")?;
        let videos = load_labeled(dir, &labels)?;
        let opts = eval_options(cfg, vec![cfg.scoring.metric]);
        let mut aucs = Vec::new();
        for c in ckpts {
            let ck = open_checkpoint(c, cfg)?;
            let ev = evaluate_videos(&ck.model, &background(&ck), &videos, &opts, None)?;
            aucs.push(ev[0].auc);
        }
        rows.push((cfg.scoring.metric, multi_run_auc(&aucs)?));
    }
    let mut run = Run::start("eval", cfg)?;
    for c in ckpts {
        run.checkpoint(c);
    }
    let mut csv = String::from("metric,auc,ci95\n");
    for (metric, r) in &rows {
        println!("{metric} auc {} ci95 {} runs {}", r.auc, r.ci95_halfwidth, r.n_runs);
        csv.push_str(&format!("{metric},{},{}\n", r.auc, r.ci95_halfwidth));
        run.summary.insert(format!("auc_{metric}"), r.auc.into());
    }
    run.write_file("results.csv", csv.as_bytes())?;
    run.finish()?;
    Ok(())
}

fn sweep_plot(run: &mut Run, name: &str, result: &SweepResult, x_key: &str) -> Result<(), CliError> {
    let mut by_series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for e in &result.entries {
        let Some(r) = e.result else { continue };
        let x = e.condition.iter().find(|(k, _)| k == x_key).and_then(|(_, v)| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
        let rest: Vec<String> = e.condition.iter().filter(|(k, _)| k != x_key).map(|(_, v)| v.clone()).collect();
        by_series.entry(format!("{}/{}", e.metric, rest.join("/"))).or_default().push((x, r.auc));
    }
    let series: Vec<Vec<(f64, f64)>> = by_series.into_values().collect();
    plot_to(run, name, &series)
}

pub fn sweep(cfg: &RunConfig, ckpts: &[PathBuf]) -> Result<(), CliError> {
    let ck_path = require_one_checkpoint(ckpts)?;
    let dir = require(&cfg.data.test, "data.test (--test-dir)")?;
    let labels = read_labels(require(&cfg.data.labels, "data.labels (--labels)")?)?;
    let ck = open_checkpoint(ck_path, cfg)?;
    let videos = load_labeled(dir, &labels)?;
    let mut run = Run::start("sweep", cfg)?;
    run.checkpoint(ck_path);
    let opts = eval_options(cfg, cfg.scoring.compare_metrics.clone());
    let result = robustness_sweep(&ck.model, &background(&ck), &videos, &cfg.sweep, &opts, cfg.seed)?;
    write_csv(&mut run, "sweep.csv", |w| write_sweep_csv(w, &result))?;
    if cfg.plots {
        sweep_plot(&mut run, "sweep.png", &result, "brightness")?;
    }
    run.summary.insert("conditions".into(), result.entries.len().into());
    run.finish()?;
    Ok(())
}

pub fn lowfps(cfg: &RunConfig) -> Result<(), CliError> {
    let train_dir = require(&cfg.data.train, "data.train (--train-dir)")?;
    let test_dir = require(&cfg.data.test, "data.test (--test-dir)")?;
    let labels = read_labels(require(&cfg.data.labels, "data.labels (--labels)")?)?;
    let (h, w) = cfg.model.input_size;
    let resize = |vs: Vec<RawVideo>| -> Vec<RawVideo> {
        vs.into_iter()
            .map(|v| RawVideo { frames: v.frames.iter().map(|f| f.resize_bilinear(h, w)).collect(), ..v })
            .collect()
    };
    let train_videos = resize(load_unlabeled(train_dir)?);
    let test_videos = resize(load_labeled(test_dir, &labels)?);
    let mut run = Run::start("lowfps", cfg)?;
    let opts = eval_options(cfg, cfg.scoring.compare_metrics.clone());
    let result = lowfps_experiment(&train_videos, &test_videos, &cfg.lowfps.d, &cfg.model, &cfg.schedule, cfg.seed, &opts)?;
    write_csv(&mut run, "lowfps.csv", |w| write_sweep_csv(w, &result))?;
    if cfg.plots {
        sweep_plot(&mut run, "lowfps.png", &result, "d")?;
    }
    run.finish()?;
    Ok(())
}

pub fn bench(cfg: &RunConfig, ckpts: &[PathBuf], video: &Path) -> Result<(), CliError> {
    let ck_path = require_one_checkpoint(ckpts)?;
    if !video.exists() {
        return Err(CliError::Config(format!("video {} does not exist", video.display())));
    }
    let ck = open_checkpoint(ck_path, cfg)?;
    let entry = if video.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(video)
            .map_err(|e| CliError::io(video.display(), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        paths.retain(|p| p.extension().is_some_and(|e| e == "png" || e == "jpg" || e == "jpeg"));
        paths.sort();
        VideoEntry { id: "bench".into(), source: VideoSource::ImageFiles(paths) }
    } else {
        VideoEntry { id: "bench".into(), source: VideoSource::Y4m(video.to_path_buf()) }
    };
    let frames = entry.load_frames()?;
    let metric = if cfg.scoring.metric.needs_decoder() { Metric::LatentCosine } else { cfg.scoring.metric };
    let report = benchmark(&ck.model, metric, &frames, &background(&ck), cfg.bench.warmup)?;
    let mut run = Run::start("bench", cfg)?;
    run.checkpoint(ck_path);
    for t in [&report.cached, &report.naive] {
        println!(
            "{:?}: {} frames in {:.3}s = {:.2} fps; per frame {:.3} ms (preprocess {:.3}, encode {:.3}, predict {:.3}, score {:.3}); {} encodes/frame",
            t.mode, t.frames, t.wall_time_s, t.fps, t.mean_frame_ms, t.stages.preprocess_ms, t.stages.encode_ms, t.stages.predict_ms,
            t.stages.score_ms, t.encodes_per_frame
        );
    }
    println!("speedup {:.2}x", report.speedup);
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    run.write_file("bench.json", &json)?;
    run.summary.insert("speedup".into(), report.speedup.into());
    run.finish()?;
    Ok(())
}

/// SHA-256 over every file under `root` (relative path and bytes, sorted by path).
pub fn dataset_hash(root: &Path, skip: &[&str]) -> Result<String, CliError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files).map_err(|e| CliError::io(root.display(), e))?;
    files.sort();
    let mut all = Vec::new();
    for f in files {
        let rel = f.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
        if skip.contains(&rel.as_str()) {
            continue;
        }
        all.extend_from_slice(rel.as_bytes());
        all.extend_from_slice(&fs::read(&f).map_err(|e| CliError::io(f.display(), e))?);
    }
    Ok(sha256_hex(&all))
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.synth;
    let normal = NormalSet { objects: s.normal_objects.clone(), speeds: vec![s.normal_speed] };
    let spec = |i: usize, tag: u64| SyntheticSpec {
        canvas: s.canvas,
        object_size: s.object_size,
        objects: s.normal_objects.clone(),
        speed: s.normal_speed,
        direction: s.direction,
        sequence_length: s.length,
        seed: cfg.seed.wrapping_mul(1_000_003) ^ (tag << 32) ^ i as u64,
        start: None,
    };
    spec(0, 0).validate()?;
    let switch = Switch {
        at_frame: s.switch_at,
        objects: (!s.anomaly_objects.is_empty()).then(|| s.anomaly_objects.clone()),
        speed: s.anomaly_speed,
    };
    let mut run = Run::start("synth", cfg)?;
    let mut labels = LabelMap::new();
    for i in 0..s.train_videos {
        let v = generate_scenario(&spec(i, 1), None, &normal)?;
        write_video_frames(&run.path(&format!("Train/train_{i:03}")), &v.frames)?;
    }
    for i in 0..s.test_videos {
        let v = generate_scenario(&spec(i, 2), Some(&switch), &normal)?;
        let id = format!("test_{i:03}");
        write_video_frames(&run.path(&format!("Test/{id}")), &v.frames)?;
        labels.insert(id, v.labels);
    }
    let label_path = run.path("test_labels.csv");
    write_labels(&label_path, &labels)?;
    run.output(run.path("Train"));
    run.output(run.path("Test"));
    run.output(&label_path);
    let hash = dataset_hash(&run.dir, &["config.toml", "manifest.json"])?;
    println!("dataset sha256 {hash}");
    run.summary.insert("dataset_sha256".into(), hash.into());
    run.finish()?;
    Ok(())
}

pub fn mnist(cfg: &RunConfig) -> Result<(), CliError> {
    let m = &cfg.mnist;
    let exp = MnistExperiment {
        canvas: cfg.model.input_size,
        object_size: m.object_size,
        normal_digits: m.normal_digits.clone(),
        normal_speed: m.normal_speed,
        train_videos: m.train_videos,
        train_length: m.train_length,
        test_videos: m.test_videos,
        test_length: m.test_length,
        switch_at: m.switch_at,
        axes: m.axes.clone(),
        model: cfg.model.clone(),
        schedule: cfg.schedule.clone(),
        model_seed: cfg.seed,
        data_seed: cfg.seed,
        eval: eval_options(cfg, cfg.scoring.compare_metrics.clone()),
    };
    exp.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut run = Run::start("mnist-exp", cfg)?;
    let result = movingmnist_experiment(&exp, Some(&run.dir))?;
    let mut csv = String::from("axis,metric,auc,ci95\n");
    for r in &result.results {
        for e in &r.evals {
            println!("{} {} auc {:.4}", r.axis, e.metric, e.auc);
            csv.push_str(&format!("{},{},{},0\n", r.axis, e.metric, e.auc));
            run.summary.insert(format!("auc_{}_{}", r.axis, e.metric), e.auc.into());
        }
        run.output(run.path(&format!("grid_{}.png", r.axis)));
    }
    run.write_file("mnist_results.csv", csv.as_bytes())?;
    run.output(run.path("loss.csv"));
    run.checkpoint(run.path("last.ckpt"));
    run.checkpoint(run.path("best.ckpt"));
    run.finish()?;
    Ok(())
}
