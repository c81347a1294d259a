use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 3
[model]
input_size = [16, 16]
k = 3
encoder_blocks = 2
base_channels = 4
latent_channels = 8
t_offset = 1
motion_blocks = 2
[schedule]
total_epochs = 2
phase_switch_epoch = 1
batch_size = 4
lr = 0.001
[scoring]
window = 0
[synth]
canvas = [16, 16]
object_size = 8
train_videos = 2
test_videos = 2
length = 12
switch_at = 6
[sweep]
brightness = [1.0, 0.5]
rain = ["none", "heavy"]
[lowfps]
d = [1, 2]
[mnist]
object_size = 8
train_videos = 2
train_length = 10
test_videos = 2
test_length = 12
switch_at = 6
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_latentvad"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    data: PathBuf,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("tiny.toml");
        fs::write(&config, TINY).unwrap();
        let data = root.join("data");
        ok(&["synth", "--config", s(&config), "--out", s(&data)]);
        let model = root.join("model");
        ok(&["train", "--config", s(&config), "--train-dir", s(&data.join("Train")), "--out", s(&model)]);
        Self { _dir: dir, root, config, data, model }
    }

    fn ckpt(&self) -> PathBuf {
        self.model.join("last.ckpt")
    }

    fn labels(&self) -> PathBuf {
        self.data.join("test_labels.csv")
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let a = ok(&["synth", "--config", s(&config), "--out", s(&dir.path().join("a"))]);
    let b = ok(&["synth", "--config", s(&config), "--out", s(&dir.path().join("b"))]);
    let c = ok(&["synth", "--config", s(&config), "--seed", "4", "--out", s(&dir.path().join("c"))]);
    assert!(a.starts_with("dataset sha256 "));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let m = manifest(&dir.path().join("a"));
    assert_eq!(m["command"], "synth");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_dataset_is_a_config_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = run(&["train", "--train-dir", s(&dir.path().join("nope")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    let r = run(&["train", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("data.train"));
}

#[test]
fn invalid_config_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "[schedule]\ntotal_epochs = 5\nphase_switch_epoch = 9\n").unwrap();
    let r = run(&["train", "--config", s(&config), "--out", s(&dir.path().join("o"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("phase_switch_epoch"));
    let r = run(&["train", "--preset", "ucsd_ped9"]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(&["score", "--metric", "psnr"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn eval_scores_fixture_with_perfect_separation() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores.csv");
    let labels = dir.path().join("labels.csv");
    fs::write(
        &scores,
        "video_id,frame_index,raw_score,normalized_score,metric\nv,0,1,0.1,latent_cosine\nv,1,2,0.2,latent_cosine\nv,2,8,0.9,latent_cosine\nv,3,9,0.8,latent_cosine\n",
    )
    .unwrap();
    fs::write(&labels, "video_id,frame_index,label\nv,0,0\nv,1,0\nv,2,1\nv,3,1\n").unwrap();
    let out = ok(&["eval", "--scores", s(&scores), "--labels", s(&labels), "--out", s(&dir.path().join("e"))]);
    assert!(out.contains("latent_cosine auc 1 "), "{out}");
    let csv = fs::read_to_string(dir.path().join("e/results.csv")).unwrap();
    assert_eq!(csv, "metric,auc,ci95\nlatent_cosine,1,0\n");
}

#[test]
fn train_score_eval_sweep_bench_pipeline() {
    let f = Fixture::new();
    let m = manifest(&f.model);
    assert_eq!(m["command"], "train");
    assert!(f.ckpt().exists());
    let loss = fs::read_to_string(f.model.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().next().unwrap(), "epoch,step,recon,pred,reg,total,lr,lambda_r,lambda_p");
    assert_eq!(loss.lines().count(), 3);
    // the snapshot alone reproduces the configuration
    let snap = f.model.join("config.toml");
    let again = f.root.join("again");
    ok(&["train", "--config", s(&snap), "--out", s(&again)]);
    assert_eq!(fs::read(f.model.join("loss.csv")).unwrap(), fs::read(again.join("loss.csv")).unwrap());

    // scoring is deterministic; metrics change the scores but not the frames
    let test = f.data.join("Test");
    let score = |metric: &str, out: &str| {
        ok(&[
            "score", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--test-dir", s(&test),
            "--metric", metric, "--out", s(&f.root.join(out)),
        ]);
        fs::read_to_string(f.root.join(out).join("scores/test_000.csv")).unwrap()
    };
    let a = score("latent_cosine", "s1");
    assert_eq!(a, score("latent_cosine", "s2"));
    let b = score("latent_mse", "s3");
    let col = |t: &str, i: usize| t.lines().skip(1).map(|l| l.split(',').nth(i).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(col(&a, 1), col(&b, 1));
    assert_ne!(col(&a, 2), col(&b, 2));
    // 12 frames, first scored frame is k - 1 + t_offset = 3
    assert_eq!(col(&a, 1).first().map(String::as_str), Some("3"));
    assert_eq!(col(&a, 1).len(), 9);

    ok(&[
        "score", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--test-dir", s(&test),
        "--localize", "--out", s(&f.root.join("loc")),
    ]);
    let regions = fs::read_to_string(f.root.join("loc/regions.csv")).unwrap();
    assert!(regions.starts_with("video_id,frame_index,x,y,w,h,mean_error\n"));
    for l in regions.lines().skip(1) {
        let v: Vec<usize> = l.split(',').skip(2).take(4).map(|x| x.parse().unwrap()).collect();
        assert!(v[0] + v[2] <= 16 && v[1] + v[3] <= 16, "{l}");
    }

    let out = ok(&[
        "eval", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--checkpoint", s(&again.join("last.ckpt")),
        "--test-dir", s(&test), "--labels", s(&f.labels()), "--out", s(&f.root.join("ev")),
    ]);
    assert!(out.contains("runs 2"), "{out}");

    ok(&[
        "sweep", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--test-dir", s(&test),
        "--labels", s(&f.labels()), "--out", s(&f.root.join("sw")), "--plots",
    ]);
    let sweep = fs::read_to_string(f.root.join("sw/sweep.csv")).unwrap();
    // 2 brightness x 2 rain x 1 blur x 3 metrics
    assert_eq!(sweep.lines().count(), 1 + 12);
    assert!(f.root.join("sw/sweep.png").exists());

    let out = ok(&[
        "bench", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--video", s(&test.join("test_000")),
        "--out", s(&f.root.join("bench")),
    ]);
    assert!(out.contains("speedup"), "{out}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.root.join("bench/bench.json")).unwrap()).unwrap();
    assert_eq!(report["cached"]["encodes_per_frame"], 1.0);

    let out = ok(&[
        "score", "--config", s(&f.config), "--checkpoint", s(&f.ckpt()), "--stream", s(&test.join("test_000")),
        "--out", s(&f.root.join("stream")),
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "frame_index,raw_score");
    assert_eq!(lines.len(), 1 + 9);
    assert!(lines[1].starts_with("3,"));
    // stream and batch raw scores agree
    for (sl, bl) in lines[1..].iter().zip(a.lines().skip(1)) {
        let sv: f64 = sl.split(',').nth(1).unwrap().parse().unwrap();
        let bv: f64 = bl.split(',').nth(2).unwrap().parse().unwrap();
        assert!((sv - bv).abs() < 1e-9);
    }

    let r = run(&[
        "score", "--preset", "avenue", "--checkpoint", s(&f.ckpt()), "--test-dir", s(&test), "--out", s(&f.root.join("mm")),
    ]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("16x16") && err.contains("128x224"), "{err}");
}

#[test]
fn lowfps_and_mnist_experiments_run() {
    let f = Fixture::new();
    ok(&[
        "lowfps", "--config", s(&f.config), "--train-dir", s(&f.data.join("Train")), "--test-dir", s(&f.data.join("Test")),
        "--labels", s(&f.labels()), "--out", s(&f.root.join("lf")),
    ]);
    let csv = fs::read_to_string(f.root.join("lf/lowfps.csv")).unwrap();
    assert!(csv.starts_with("d,metric,auc,ci95\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    let out = ok(&["mnist-exp", "--config", s(&f.config), "--out", s(&f.root.join("mn"))]);
    assert!(out.contains("unseen_shapes"));
    let m = manifest(&f.root.join("mn"));
    for p in m["outputs"].as_array().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).exists(), "{p}");
    }
    assert!(f.root.join("mn/grid_speed_4.png").exists());
}
