//! End-to-end tests of the `qexpert` binary: each test drives the real
//! executable against a synthetic corpus inside a temp directory and
//! checks artifacts, output shapes, exit codes, and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qexpert");

/// A throwaway project directory holding a config and its artifacts.
struct Project {
    dir: tempfile::TempDir,
}

fn config_text(seed: u64) -> String {
    format!(
        r#"
output_dir = "out"
seed = {seed}

[data]
train = "out/train.tsv"
dev = "out/dev.tsv"
test1 = "out/test1.tsv"
test2 = "out/test2.tsv"

[embeddings.words]
dim = 12
epochs = 2

[embeddings.users]
dim = 12
walks_per_vertex = 3
walk_length = 10
epochs = 2

[model]
preset = "desk"
filters_per_size = 6
seq_len = 10

[train]
learning_rate = 0.001
epochs = 2
max_pairs_per_question = 2

[eval]
k = 4

[synth]
topics = 3
users = 12
train_questions = 40
dev_questions = 12
test1_questions = 12
test2_questions = 12
vocab_size = 48

[grid]
models = ["quser", "qa"]
optimizers = ["adam"]
learning_rates = [0.001]
region_size_sets = [[2, 3]]
"#
    )
}

impl Project {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config_text(7)).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .current_dir(self.dir.path())
            .arg("--config")
            .arg("run.toml")
            .args(args)
            .output()
            .expect("binary runs")
    }

    fn run_ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "command {args:?} failed:\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).expect("utf8 stdout")
    }

    fn bytes(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.path(rel))
            .unwrap_or_else(|e| panic!("missing artifact {rel}: {e}"))
    }
}

fn line_value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("no `{key}` line in output:\n{stdout}"))
}

fn assert_exists(path: &Path) {
    assert!(path.exists(), "expected artifact {}", path.display());
}

#[test]
fn quser_pipeline_end_to_end() {
    let p = Project::new();
    p.run_ok(&["synth"]);
    for split in ["train", "dev", "test1", "test2"] {
        assert_exists(&p.path(&format!("out/{split}.tsv")));
        assert_exists(&p.path(&format!("out/{split}.experts.tsv")));
    }

    let ingest = p.run_ok(&["ingest"]);
    assert!(ingest.contains("train\t40 records"));
    assert!(ingest.contains("vocab\t"));

    let users = p.run_ok(&["embed", "users"]);
    assert_eq!(line_value(&users, "header"), "12 12");
    let words = p.run_ok(&["embed", "words"]);
    assert!(line_value(&words, "header").ends_with(" 12"));
    let header = std::fs::read_to_string(p.path("out/users.vec")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "12 12");

    let train = p.run_ok(&["train"]);
    assert_eq!(line_value(&train, "model"), "quser");
    assert_exists(&p.path("out/quser.ckpt"));

    // Metrics: header plus one line per epoch, all three columns filled.
    let metrics = String::from_utf8(p.bytes("out/quser.metrics.tsv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "epoch\tloss\tdev_top1");
    let epochs: Vec<&str> = lines.collect();
    assert!(!epochs.is_empty());
    for (i, line) in epochs.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3, "bad metrics line {line:?}");
        assert_eq!(cols[0], (i + 1).to_string());
        cols[1].parse::<f64>().expect("loss is a number");
        cols[2].parse::<f64>().expect("dev accuracy is a number");
    }

    // Best-dev curve: monotone nonincreasing error.
    let curve = String::from_utf8(p.bytes("out/quser.best.tsv")).unwrap();
    let errors: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(errors.len(), epochs.len());
    for pair in errors.windows(2) {
        assert!(pair[1] <= pair[0], "best-dev error increased: {errors:?}");
    }

    let eval = p.run_ok(&["eval", "--split", "test1"]);
    let top1: f64 = line_value(&eval, "top1").parse().unwrap();
    assert!((0.0..=1.0).contains(&top1));
    assert_exists(&p.path("out/eval_test1_quser.tsv"));

    // Gold is the only candidate at K=1, so Top-1 is exact.
    let k1 = p.run_ok(&["eval", "--split", "dev", "--k", "1"]);
    assert_eq!(line_value(&k1, "top1"), "1");

    // Ranking: known users ranked by descending score, unknown users
    // reported on stderr, empty question still valid.
    std::fs::write(p.path("pool.txt"), "u0000\nu0004\nu0008\nghost\n").unwrap();
    let out = p.run(&["rank", "k0_0 k0_1 k0_2", "pool.txt"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown user: ghost"));
    let ranked = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<String>> = ranked
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    let scores: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "not sorted: {scores:?}");
    assert_eq!(rows[0][0], "1");

    let empty_q = p.run_ok(&["rank", "", "pool.txt"]);
    assert_eq!(empty_q.lines().count(), 3);
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let p = Project::new();
    p.run_ok(&["synth"]);
    p.run_ok(&["embed", "users"]);
    p.run_ok(&["train"]);
    p.run_ok(&["eval", "--split", "test1"]);

    let vectors = p.bytes("out/users.vec");
    let ckpt = p.bytes("out/quser.ckpt");
    let metrics = p.bytes("out/quser.metrics.tsv");
    let report = p.bytes("out/eval_test1_quser.tsv");

    p.run_ok(&["embed", "users"]);
    p.run_ok(&["train"]);
    p.run_ok(&["eval", "--split", "test1"]);
    assert_eq!(vectors, p.bytes("out/users.vec"));
    assert_eq!(ckpt, p.bytes("out/quser.ckpt"));
    assert_eq!(metrics, p.bytes("out/quser.metrics.tsv"));
    assert_eq!(report, p.bytes("out/eval_test1_quser.tsv"));

    // A different seed must actually change the learned model.
    p.run_ok(&["--seed", "42", "train"]);
    assert_ne!(ckpt, p.bytes("out/quser.ckpt"));
}

#[test]
fn qa_model_and_grid_report() {
    let p = Project::new();
    p.run_ok(&["synth"]);
    let train = p.run_ok(&["train", "--model", "qa"]);
    assert_eq!(line_value(&train, "model"), "qa");
    let eval = p.run_ok(&["eval", "--model", "qa", "--split", "test2"]);
    let top1: f64 = line_value(&eval, "top1").parse().unwrap();
    assert!((0.0..=1.0).contains(&top1));

    let grid = p.run_ok(&["grid"]);
    assert!(grid.contains("cells\t2"));
    let report = String::from_utf8(p.bytes("out/grid.tsv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(
        lines[0],
        "model\toptimizer\tlearning_rate\tregion_sizes\ttrain_loss\ttest1_top1\ttest2_top1"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("quser\tadam\t0.001\t2,3\t"));
    assert!(lines[2].starts_with("qa\tadam\t0.001\t2,3\t"));
}

#[test]
fn validation_failures_exit_nonzero_before_outputs() {
    let p = Project::new();
    // No synth yet: the train dataset is missing.
    let out = p.run(&["ingest"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(stderr.contains("out/train.tsv"), "stderr: {stderr}");
    assert!(!p.path("out/quser.ckpt").exists());

    let out = p.run(&["train"]);
    assert!(!out.status.success());
    assert!(!p.path("out/quser.ckpt").exists());
    assert!(!p.path("out/quser.metrics.tsv").exists());

    // Unknown values in flags are rejected.
    p.run_ok(&["synth"]);
    let out = p.run(&["eval", "--split", "somewhere"]);
    assert!(!out.status.success());
    let out = p.run(&["train", "--model", "qcnn"]);
    assert!(!out.status.success());

    // Config typos die loudly.
    std::fs::write(p.path("bad.toml"), "sed = 3\n").unwrap();
    let out = Command::new(BIN)
        .current_dir(p.dir.path())
        .args(["--config", "bad.toml", "ingest"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn stale_checkpoint_is_rejected_with_fingerprint_error() {
    let p = Project::new();
    p.run_ok(&["synth"]);
    p.run_ok(&["train"]);
    // Appending a record changes the vocabulary, so the checkpoint no
    // longer matches the corpus it would be evaluated against.
    let train_file = p.path("out/train.tsv");
    let mut data = std::fs::read_to_string(&train_file).unwrap();
    data.push_str("zq1\tsomething entirely new\tu0001:4,u0002:1\n");
    std::fs::write(&train_file, data).unwrap();

    let out = p.run(&["eval", "--split", "dev"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(stderr.contains("fingerprint mismatch"), "stderr: {stderr}");
}

#[test]
fn thread_cap_is_validated() {
    let p = Project::new();
    p.run_ok(&["synth"]);
    let out = Command::new(BIN)
        .current_dir(p.dir.path())
        .env("QEXPERT_THREADS", "2")
        .args(["--config", "run.toml", "ingest"])
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = Command::new(BIN)
        .current_dir(p.dir.path())
        .env("QEXPERT_THREADS", "many")
        .args(["--config", "run.toml", "ingest"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("QEXPERT_THREADS"));
}
