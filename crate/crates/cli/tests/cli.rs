use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn graphnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = graphnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes_and_reports_every_architecture() {
    let out = ok(&["gradcheck", "--seed", "3"]);
    for name in ["gvrnn", "ggru", "glstm", "commnet", "sgcn", "gatedgcn", "weighted_cross_entropy"] {
        assert!(out.contains(name), "{name} missing");
    }
    assert!(!out.contains("FAIL"));
    let json: serde_json::Value = serde_json::from_str(&ok(&["gradcheck", "--json"])).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 13);
}

const TRAIN: &[&str] = &[
    "train",
    "--arch",
    "gatedgcn",
    "--task",
    "clustering",
    "--layers",
    "2",
    "--hidden",
    "8",
    "--iterations",
    "30",
    "--eval-instances",
    "3",
    "--curve-every",
    "10",
    "--seed",
    "5",
    "--out",
];

#[test]
fn train_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let mut args = TRAIN.to_vec();
        args.push(path(d));
        let out = ok(&args);
        assert!(out.starts_with("gatedgcn clustering L=2 H=8"));
    }
    for f in ["train.csv", "learning_speed.csv", "summary.json", "checkpoint.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    for f in ["train_timing.csv", "learning_speed_timing.csv", "timing.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let curve = fs::read_to_string(a.join("learning_speed.csv")).unwrap();
    assert_eq!(curve.lines().count(), 2 + 4);
}

#[test]
fn train_rejects_unknown_architecture_and_infeasible_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphnet(&["train", "--arch", "transformer", "--task", "matching", "--out", path(dir.path())]);
    assert!(!out.status.success());
    let out = graphnet(&[
        "train", "--arch", "glstm", "--task", "matching", "--budget", "10", "--out", path(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

const SPEC: &str = r#"
name = "cli-sweep"
task = "clustering"
sweep = "noise"
values = [0.0, 0.3]
architectures = ["commnet", "glstm"]
trials = 2
master_seed = 8

[fixed]
layers = 1
hidden = 5
iterations = 8
eval_instances = 2
"#;

#[test]
fn sweep_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cli-sweep.toml");
    fs::write(&cfg, SPEC).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["sweep", path(&cfg), "--out", path(&a), "--quiet", "--workers", "1"]);
    let out = Command::new(env!("CARGO_BIN_EXE_graphnet"))
        .args(["sweep", path(&cfg), "--out", path(&b)])
        .env("GRAPHNET_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trial"));
    for f in ["results.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 4);

    fs::write(&cfg, SPEC.replace("trials = 2", "trials = 0")).unwrap();
    assert!(!graphnet(&["sweep", path(&cfg), "--out", path(&a)]).status.success());
}

#[test]
fn gen_then_dirichlet_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    ok(&["gen", "--task", "clustering", "--q", "0.1", "--count", "2", "--seed", "4", "--out", path(&inst)]);
    let files: Vec<_> = fs::read_dir(&inst).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 2);
    let csv = dir.path().join("assign.csv");
    ok(&["dirichlet", "--input", path(&files[0]), "--out", path(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# graphnet dirichlet-assignment v1"));
    assert_eq!(lines.next(), Some("file,node,label,target,unseeded"));
    assert!(lines.count() >= 50);

    ok(&["gen", "--task", "matching", "--count", "1", "--out", path(&inst)]);
    let m = inst.join("matching-0000.txt");
    assert!(!graphnet(&["dirichlet", "--input", path(&m)]).status.success());
}

#[test]
fn dirichlet_summary_is_deterministic() {
    let a = ok(&["dirichlet", "--instances", "6", "--seed", "2"]);
    let b = ok(&["dirichlet", "--instances", "6", "--seed", "2"]);
    assert_eq!(a, b);
    assert!(a.starts_with("# graphnet dirichlet v1\ninstance,accuracy\n"));
    assert_eq!(a.lines().count(), 8);
}
