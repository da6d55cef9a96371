use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ossl_core::checkpoint::{load_bundle, load_starting_point};
use ossl_core::model::Group;
use tempfile::TempDir;

const SMALL: &str = r#"
seeds = [3]

[dataset]
samples_per_class = 30

[source]
epochs = 4
extractor_hidden = [16]
feature_dim = 8
head_hidden = 8

[adapt]
epoch_max = 3
batch_size = 64
mu = 0.8
gamma = 0.3
"#;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ossl"))
            .current_dir(self.dir.path())
            .env_remove("OSSL_OUTPUT_ROOT")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn csv_rows(p: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(p).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn gen_data_writes_files_and_is_deterministic() {
    let env = Env::new();
    env.ok(&["gen-data", "--out", "a"]);
    env.ok(&["gen-data", "--out", "b"]);
    for f in ["train.txt", "test.txt", "manifest.json", "config.toml"] {
        assert_eq!(read(&env.path("a").join(f)), read(&env.path("b").join(f)), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&env.path("a/manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["seeds"][0], 7);
}

#[test]
fn malformed_spec_exits_with_config_code() {
    let env = Env::new();
    let out = env.run(&["gen-data", "--set", "dataset.dim=1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dim"));
    let out = env.run(&["gen-data", "--set", "dataset.colour=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn missing_data_file_exits_with_data_code() {
    let env = Env::new();
    let out = env.run(&["train-source", "--train", "nope.txt", "--test", "nope.txt"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn train_source_then_adapt_from_checkpoint() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "gen-data", "--out", "data"]);
    let files = ["--train", "data/train.txt", "--test", "data/test.txt"];
    let mut args = vec!["-c", "small.toml", "train-source", "--out", "src"];
    args.extend(files);
    let stdout = env.ok(&args);
    assert!(stdout.contains("holdout accuracy"));

    let mut args = vec!["-c", "small.toml", "adapt", "--start", "src/start.ckpt", "--out", "ad"];
    args.extend(files);
    let stdout = env.ok(&args);
    assert!(stdout.contains("before") && stdout.contains("after") && stdout.contains("macro-F1"));
    let rows = csv_rows(&env.path("ad/metrics.csv"));
    assert_eq!(rows.len(), 4);
    let json: serde_json::Value = serde_json::from_slice(&read(&env.path("ad/metrics.json"))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 4);
    assert!(env.path("ad/adapted.ckpt").exists());
}

#[test]
fn zero_epochs_keeps_the_starting_point() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "adapt", "--epoch-max", "0", "--out", "ad"]);
    let start = load_starting_point::<f64>(&env.path("ad/start.ckpt")).unwrap();
    let adapted = load_bundle::<f64>(&env.path("ad/adapted.ckpt")).unwrap();
    assert_eq!(adapted.extractor, start.extractor);
    assert_eq!(adapted.classifier, start.classifier);
}

#[test]
fn frozen_extractor_run_leaves_extractor_alone() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "adapt", "--frozen-extractor", "--out", "ad"]);
    let start = load_starting_point::<f64>(&env.path("ad/start.ckpt")).unwrap().as_bundle();
    let adapted = load_bundle::<f64>(&env.path("ad/adapted.ckpt")).unwrap();
    assert_eq!(adapted.checksum(Group::Extractor), start.checksum(Group::Extractor));
    assert_ne!(adapted.checksum(Group::Classifier), start.checksum(Group::Classifier));
    assert!(adapted.frozen_extractor);
}

#[test]
fn rerun_from_stored_config_is_bitwise_identical() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "--seed", "5", "adapt", "--out", "first"]);
    env.ok(&["-c", "first/config.toml", "adapt", "--out", "second"]);
    for f in ["metrics.csv", "metrics.json", "adapted.ckpt", "start.ckpt", "config.toml", "manifest.json"] {
        assert_eq!(read(&env.path("first").join(f)), read(&env.path("second").join(f)), "{f}");
    }
}

#[test]
fn cli_flags_override_config_file() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "--mu", "0.6", "--set", "adapt.epoch_max=1", "adapt", "--out", "ad"]);
    let resolved = fs::read_to_string(env.path("ad/config.toml")).unwrap();
    let table: toml::Table = resolved.parse().unwrap();
    assert_eq!(table["adapt"]["mu"].as_float(), Some(0.6));
    assert_eq!(table["adapt"]["gamma"].as_float(), Some(0.3));
    assert_eq!(table["adapt"]["epoch_max"].as_integer(), Some(1));
}

#[test]
fn output_root_comes_from_environment() {
    let env = Env::new();
    let root = env.path("envroot");
    let out = Command::new(env!("CARGO_BIN_EXE_ossl"))
        .current_dir(env.dir.path())
        .env("OSSL_OUTPUT_ROOT", &root)
        .args(["-c", "small.toml", "gen-data"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let runs: Vec<_> = fs::read_dir(&root).unwrap().collect();
    assert_eq!(runs.len(), 1);
}

#[test]
fn sweep_of_one_cell_matches_adapt() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "sweep", "--mu-grid", "0.8", "--gamma-grid", "0.3", "--seeds", "3", "--out", "sw"]);
    env.ok(&["-c", "small.toml", "--seed", "3", "adapt", "--out", "ad"]);
    let summary: serde_json::Value = serde_json::from_slice(&read(&env.path("ad/summary.json"))).unwrap();
    let rows = csv_rows(&env.path("sw/sweep.csv"));
    let header = csv::Reader::from_path(env.path("sw/sweep.csv")).unwrap().headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let auroc = rows.iter().find(|r| &r[col("metric")] == "auroc").unwrap();
    let after: f64 = auroc[col("after")].parse().unwrap();
    assert_eq!(after, summary["after"]["auroc"].as_f64().unwrap());
}

#[test]
fn sweep_table_has_one_cell_per_grid_point_and_seed() {
    let env = Env::new();
    let args = ["-c", "small.toml", "--epoch-max", "1", "sweep", "--mu-grid", "0.6,0.8", "--gamma-grid", "0.2,0.3,0.4", "--seeds", "1,2"];
    env.ok(&[&args[..], &["--out", "a"]].concat());
    let rows = csv_rows(&env.path("a/sweep.csv"));
    assert_eq!(rows.len(), 2 * 3 * 2 * 4);
    env.ok(&[&args[..], &["--out", "b"]].concat());
    assert_eq!(read(&env.path("a/sweep.csv")), read(&env.path("b/sweep.csv")));
}

#[test]
fn ablation_matrix_and_baseline() {
    let env = Env::new();
    env.ok(&["-c", "small.toml", "--epoch-max", "1", "ablate", "--injection", "8,16", "--seeds", "3", "--out", "ab"]);
    let rows = csv_rows(&env.path("ab/ablate.csv"));
    // starting point + {0, 8, 16} × margin × frozen, four metrics each
    assert_eq!(rows.len(), (1 + 3 * 2 * 2) * 4);
    let header = csv::Reader::from_path(env.path("ab/ablate.csv")).unwrap().headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let base = rows
        .iter()
        .find(|r| &r[col("variant")] == "starting-point" && &r[col("metric")] == "auroc")
        .unwrap();

    env.ok(&["-c", "small.toml", "--seed", "3", "train-source", "--out", "src"]);
    env.ok(&["-c", "small.toml", "--seed", "3", "evaluate", "--checkpoint", "src/start.ckpt", "--out", "ev"]);
    let report: serde_json::Value = serde_json::from_slice(&read(&env.path("ev/metrics.json"))).unwrap();
    let before: f64 = base[col("before")].parse().unwrap();
    assert_eq!(before, report["auroc"].as_f64().unwrap());
    assert_eq!(&base[col("delta")], "0.0");
}
