use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fewshot-wsd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn binary")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let out = run(&["fixture", "--out", s(&root.join("fx")), "--seed", "3", "--words", "30"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(root.join("cfg.toml"), "epochs = 6\ndev_eval_every = 3\nclassifier_epochs = 2\n").unwrap();
        Workspace { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--corpus".into(),
            self.p("fx/train.jsonl").to_str().unwrap().into(),
            "--inventory".into(),
            self.p("fx/inventory.json").to_str().unwrap().into(),
            "--config".into(),
            self.p("cfg.toml").to_str().unwrap().into(),
        ]
    }

    fn ok(&self, cmd: &[&str]) -> String {
        let mut args: Vec<String> = cmd.iter().map(|a| a.to_string()).collect();
        args.extend(self.data_args());
        let out = bin().args(&args).output().unwrap();
        assert!(
            out.status.success(),
            "{cmd:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn train_and_predict(&self, tag: &str) -> Vec<u8> {
        let run_dir = self.p(tag);
        self.ok(&["train", "--seed", "4", "--dev", s(&self.p("fx/dev.jsonl")), "--out", s(&run_dir)]);
        let pred = run_dir.join("pred.jsonl");
        self.ok(&[
            "predict",
            "--checkpoint",
            s(&run_dir.join("checkpoint.json")),
            "--bank",
            s(&run_dir.join("bank.json")),
            "--in",
            s(&self.p("fx/test.jsonl")),
            "--out",
            s(&pred),
            "--seed",
            "4",
        ]);
        std::fs::read(pred).unwrap()
    }
}

#[test]
fn end_to_end_run_is_reproducible() {
    let ws = Workspace::new();
    let a = ws.train_and_predict("a");
    let b = ws.train_and_predict("b");
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(ws.p("a/checkpoint.json")).unwrap(),
        std::fs::read(ws.p("b/checkpoint.json")).unwrap()
    );

    let report = ws.ok(&[
        "eval",
        "--pred",
        s(&ws.p("a/pred.jsonl")),
        "--gold",
        s(&ws.p("fx/test.jsonl")),
        "--report",
        s(&ws.p("a/report.json")),
    ]);
    assert!(report.contains("ALL"));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.p("a/report.json")).unwrap()).unwrap();
    assert!(json["all"]["f1"].as_f64().unwrap() > 0.0);
}

#[test]
fn predict_reuses_a_matching_bank_and_rebuilds_a_stale_one() {
    let ws = Workspace::new();
    let first = ws.train_and_predict("run");
    let bank = ws.p("run/bank.json");
    let built = std::fs::read(&bank).unwrap();

    // Same checkpoint and seed: the bank is reused untouched.
    let again = ws.train_and_predict("run");
    assert_eq!(first, again);
    assert_eq!(std::fs::read(&bank).unwrap(), built);

    // A different seed invalidates the bank.
    ws.ok(&[
        "predict",
        "--checkpoint",
        s(&ws.p("run/checkpoint.json")),
        "--bank",
        s(&bank),
        "--in",
        s(&ws.p("fx/test.jsonl")),
        "--out",
        s(&ws.p("run/pred2.jsonl")),
        "--seed",
        "5",
    ]);
    let rebuilt: serde_json::Value = serde_json::from_slice(&std::fs::read(&bank).unwrap()).unwrap();
    let original: serde_json::Value = serde_json::from_slice(&built).unwrap();
    assert_ne!(rebuilt["seed"], original["seed"]);
}

#[test]
fn baselines_print_a_comparison_table() {
    let ws = Workspace::new();
    let table = ws.ok(&["baselines", "--gold", s(&ws.p("fx/test.jsonl")), "--seed", "2"]);
    for name in ["s1", "mfs", "bert-knn-analog", "classifier", "ALL"] {
        assert!(table.contains(name), "{name} missing from\n{table}");
    }
}

#[test]
fn stats_and_sample_emit_expected_shapes() {
    let ws = Workspace::new();
    let stats: serde_json::Value = serde_json::from_str(&ws.ok(&["stats", "--json"])).unwrap();
    assert_eq!(stats["word_counts"].as_object().unwrap().len(), 30);

    let text = ws.ok(&["stats", "--threshold", "1000"]);
    assert!(text.contains("1.0000"), "{text}");

    let episodes = ws.ok(&["sample", "--seed", "1"]);
    let lines: Vec<serde_json::Value> = episodes.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|e| !e["support"].as_array().unwrap().is_empty()));
    assert_eq!(episodes, ws.ok(&["sample", "--seed", "1"]));
}

#[test]
fn dump_embeddings_writes_one_row_per_instance() {
    let ws = Workspace::new();
    ws.train_and_predict("run");
    let out = ws.p("emb.tsv");
    let res = run(&[
        "dump-embeddings",
        "--checkpoint",
        s(&ws.p("run/checkpoint.json")),
        "--in",
        s(&ws.p("fx/dev.jsonl")),
        "--out",
        s(&out),
    ]);
    assert!(res.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    let mut lines = text.lines();
    let dim: usize = lines.next().unwrap().strip_prefix("d=").unwrap().parse().unwrap();
    let rows: Vec<&str> = lines.collect();
    let n_dev = std::fs::read_to_string(ws.p("fx/dev.jsonl")).unwrap().lines().count();
    assert_eq!(rows.len(), n_dev);
    assert!(rows.iter().all(|r| r.split('\t').count() == dim + 2));
}

#[test]
fn missing_file_exits_with_io_code() {
    let out = run(&["stats", "--corpus", "/definitely/not/here.jsonl", "--inventory", "/nor/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nor/here.json"));
}

#[test]
fn bad_config_exits_with_config_code() {
    let ws = Workspace::new();
    std::fs::write(ws.p("cfg.toml"), "no_such_key = 1\n").unwrap();
    let mut args = vec!["stats".to_string()];
    args.extend(ws.data_args());
    let out = bin().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
