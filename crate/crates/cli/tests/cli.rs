use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ia_core::data::{read_ighm, write_ighm, AttentionMap, SplitManifest};
use ia_core::synth::write_synthetic_dataset;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const TINY: &str = "seed = 5\n[train]\nepochs = 2\nbatch_size = 4\n";
const TINY_TOY: &str = "[toy]\nn_train = 32\nn_test = 16\nepochs = 2\nwidth = 16\nheads = 2\nmlp_hidden = 16\n";

fn ia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ia"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Corpus {
    dir: TempDir,
    manifest: PathBuf,
}

impl Corpus {
    fn new(n: usize) -> Self {
        let dir = TempDir::new().unwrap();
        let manifest = write_synthetic_dataset(dir.path().join("data"), n, 64, 11).unwrap();
        std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
        Corpus { dir, manifest }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        let out = self.path(out);
        let config = self.path("tiny.toml");
        let mut full = vec!["--manifest", s(&self.manifest), "--out", s(&out), "--config", s(&config)];
        full.extend_from_slice(args);
        ia(&full)
    }
}

fn run_json(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap()
}

fn sha(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn help_exits_zero() {
    let o = ia(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("train-toy"));
}

#[test]
fn unknown_flag_and_subcommand_exit_one() {
    let o = ia(&["--definitely-not-a-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--definitely-not-a-flag"));
    let o = ia(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frobnicate"));
}

#[test]
fn missing_manifest_is_a_validation_error_with_run_json() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = ia(&["--out", s(&out), "split"]);
    assert_eq!(o.status.code(), Some(1));
    let meta = run_json(&out);
    assert_eq!(meta["exit_code"], 1);
    assert_eq!(meta["status"], "validation_error");
    assert!(meta["error"].as_str().unwrap().contains("--manifest"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let c = Corpus::new(4);
    std::fs::write(c.path("tiny.toml"), "[train]\nepochz = 3\n").unwrap();
    let o = c.run("out", &["split"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn oracle_evaluation_scores_perfect_cc() {
    let c = Corpus::new(6);
    let o = c.run("eval", &["evaluate", "--oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(c.path("eval/report.json")).unwrap()).unwrap();
    assert!((report["cc"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(report["kldiv"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(report["n_samples"], 6);
    let csv = std::fs::read_to_string(c.path("eval/per_sample.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn evaluate_needs_exactly_one_source() {
    let c = Corpus::new(4);
    assert_eq!(c.run("e", &["evaluate"]).status.code(), Some(1));
    let o = c.run("e", &["evaluate", "--oracle", "--pred", "x"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn pipeline_end_to_end_and_leakage_guard() {
    let c = Corpus::new(20);
    let o = c.run("run", &["split"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let split_path = c.path("run/split.json");
    let split = SplitManifest::load(&split_path).unwrap();
    assert!(!split.test_ids.is_empty() && !split.train_ids.is_empty());

    let o = c.run("run", &["train", "--split", s(&split_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(c.path("run/loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,lr,mean_loss"));
    assert_eq!(lines.count(), 2);
    let ck = c.path("run/checkpoint.iack");

    let o = c.run("run", &["predict", "--checkpoint", s(&ck), "--split", s(&split_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for id in &split.test_ids {
        let map: AttentionMap<f32> = read_ighm(c.path(&format!("run/predictions/{id}.ighm"))).unwrap();
        assert_eq!(map.shape(), (64, 64));
        assert!(c.path(&format!("run/predictions/{id}.png")).exists());
    }

    let o = c.run("run", &["evaluate", "--checkpoint", s(&ck), "--split", s(&split_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(c.path("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["n_samples"], split.test_ids.len());
    for key in ["cc", "kldiv", "sim", "auc"] {
        assert!(report[key].as_f64().unwrap().is_finite(), "{key}");
    }

    let pred_dir = c.path("run/predictions");
    let o = c.run("ext", &["evaluate", "--pred", s(&pred_dir), "--split", s(&split_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ext: serde_json::Value =
        serde_json::from_slice(&std::fs::read(c.path("ext/report.json")).unwrap()).unwrap();
    assert!((ext["cc"].as_f64().unwrap() - report["cc"].as_f64().unwrap()).abs() < 1e-6);

    let o = c.run("pseudo", &["pseudo-label", "--checkpoint", s(&ck)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&split.train_ids[0]));
    assert_eq!(run_json(&c.path("pseudo"))["exit_code"], 1);

    let manifest = std::fs::read_to_string(&c.manifest).unwrap();
    let test_only: String = manifest
        .lines()
        .filter(|l| split.test_ids.iter().any(|id| l.contains(&format!("\"{id}\""))))
        .map(|l| format!("{l}\n"))
        .collect();
    let test_manifest = c.manifest.with_file_name("test_only.jsonl");
    std::fs::write(&test_manifest, test_only).unwrap();
    let out = c.path("pseudo2");
    let o = ia(&[
        "--manifest",
        s(&test_manifest),
        "--out",
        s(&out),
        "pseudo-label",
        "--checkpoint",
        s(&ck),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(run_json(&out)["status"], "ok");
    assert!(std::fs::read_dir(out.join("pseudo")).unwrap().count() > 0);
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let c = Corpus::new(12);
    let mut digests = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "2")] {
        let split = c.path(&format!("{run}/split.json"));
        let ck = c.path(&format!("{run}/checkpoint.iack"));
        assert_eq!(c.run(run, &["--jobs", jobs, "split"]).status.code(), Some(0));
        let o = c.run(run, &["--jobs", jobs, "train", "--split", s(&split)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let o = c.run(run, &["--jobs", jobs, "predict", "--checkpoint", s(&ck), "--no-png"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut files = vec![split, ck, c.path(&format!("{run}/loss.csv"))];
        let mut preds: Vec<PathBuf> = std::fs::read_dir(c.path(&format!("{run}/predictions")))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        preds.sort();
        assert_eq!(preds.len(), 12);
        files.extend(preds);
        digests.push(
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), sha(p)))
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn resume_continues_training() {
    let c = Corpus::new(8);
    assert_eq!(c.run("r", &["train"]).status.code(), Some(0));
    let ck = c.path("r/checkpoint.iack");
    let o = c.run("r2", &["train", "--resume", s(&ck), "--epochs", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(c.path("r2/loss.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn convert_fixations_writes_maps() {
    let c = Corpus::new(3);
    let o = c.run("h", &["convert-fixations", "--sigma", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta = run_json(&c.path("h"));
    assert_eq!(meta["artifacts"].as_array().unwrap().len(), 6);
    let map: AttentionMap<f32> = read_ighm(c.path("h/heatmaps/syn0000.ighm")).unwrap();
    assert_eq!(map.shape(), (64, 64));
    assert!((map.max() - 1.0).abs() < 1e-6);
}

#[test]
fn train_toy_writes_report_and_figures() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("toy.toml");
    std::fs::write(&cfg, TINY_TOY).unwrap();
    let out = dir.path().join("toy");
    let o = ia(&["--out", s(&out), "--config", s(&cfg), "train-toy", "--align", "human"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("toy_report.json")).unwrap()).unwrap();
    assert_eq!(report["loss_log"].as_array().unwrap().len(), 2);
    assert_eq!(report["align"]["source"], "human");
    for k in 0..4 {
        assert!(out.join(format!("attention/sample{k}.png")).exists());
    }
    let o = ia(&["--out", s(&out), "--config", s(&cfg), "train-toy", "--lambda2", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plot_figure_matches_golden() {
    let dir = TempDir::new().unwrap();
    let img = image::RgbImage::from_fn(32, 24, |x, y| image::Rgb([(x * 8) as u8, (y * 10) as u8, 90]));
    let img_path = dir.path().join("img.png");
    img.save(&img_path).unwrap();
    let map = AttentionMap::<f32>::new(
        6,
        8,
        (0..48).map(|i| ((i % 8) as f32 / 7.0) * ((i / 8) as f32 / 5.0)).collect(),
    )
    .unwrap();
    let map_path = dir.path().join("m.ighm");
    write_ighm(&map_path, &map).unwrap();
    let out = dir.path().join("out");
    let o = ia(&[
        "--out",
        s(&out),
        "plot",
        "--image",
        s(&img_path),
        "--map",
        s(&map_path),
        "--label",
        "img",
        "--label",
        "ramp",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fig = image::open(out.join("figure.png")).unwrap().to_rgb8();
    assert_eq!(fig.dimensions(), (2 * 32 + 4, 24 + 12));
    for (x, y, px) in img.enumerate_pixels() {
        assert_eq!(fig.get_pixel(x, y), px);
    }
    // top row of the map is zero, so the overlay leaves it untouched
    for x in 0..32 {
        assert_eq!(fig.get_pixel(36 + x, 0), img.get_pixel(x, 0));
    }
    assert_eq!(sha(&out.join("figure.png")), GOLDEN_FIGURE);
}

const GOLDEN_FIGURE: &str = "958883153f63903da92a7edbd218b05100cd7036ee5be63d4a4a7d9f70450e73";
