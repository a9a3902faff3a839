use std::fs;
use std::path::Path;

use graphnet::exec::Execution;
use graphnet::experiment::*;
use graphnet::models::{count_params, Arch};

const TINY: &str = r#"
name = "tiny"
task = "matching"
sweep = "layers"
values = [1, 2]
architectures = ["sgcn", "ggru"]
trials = 2
master_seed = 99

[fixed]
hidden = 6
iterations = 6
eval_instances = 2
measure_batch_time = false
"#;

fn tiny() -> ExperimentSpec {
    ExperimentSpec::from_toml_str(TINY).unwrap()
}

fn quiet() -> RunOptions {
    RunOptions {
        workers: Some(1),
        verbose: false,
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn parses_spec_with_defaults() {
    let s = tiny();
    assert_eq!(s.sweep, SweepVar::Layers);
    assert_eq!(s.architectures, vec![Arch::Sgcn, Arch::Ggru]);
    assert_eq!(s.fixed.q_noise, 0.1);
    assert_eq!(s.fixed.inner_steps, 3);
    assert!(s.fixed.residual);
}

#[test]
fn rejects_invalid_specs() {
    let cases = [
        ("values = [1, 2]", "values = []"),
        ("trials = 2", "trials = 0"),
        (r#"["sgcn", "ggru"]"#, r#"["sgcn", "sgcn"]"#),
        ("values = [1, 2]", "values = [1, 2.5]"),
        ("values = [1, 2]", "values = [0, 2]"),
        ("hidden = 6", "hidden = 0"),
        ("hidden = 6", "# no width"),
        ("hidden = 6", "hidden = 6\nwidth = 3"),
        (r#"name = "tiny""#, r#"name = "a b""#),
        (r#"sweep = "layers""#, r#"sweep = "depth""#),
    ];
    for (from, to) in cases {
        let text = TINY.replace(from, to);
        assert!(ExperimentSpec::from_toml_str(&text).is_err(), "accepted: {to}");
    }
    let ls = TINY
        .replace(r#"sweep = "layers""#, r#"sweep = "learning_speed""#)
        .replace("values = [1, 2]", "values = [0, 3, 7]");
    assert!(ExperimentSpec::from_toml_str(&ls).is_err());
    let noise = TINY
        .replace(r#"sweep = "layers""#, r#"sweep = "noise""#)
        .replace("values = [1, 2]", "values = [0.1, 1.5]");
    assert!(ExperimentSpec::from_toml_str(&noise).is_err());
}

#[test]
fn cell_models_follow_sweep_variable() {
    let s = tiny();
    let m = s.cell_model(Arch::Ggru, 2.0).unwrap();
    assert_eq!((m.layers, m.hidden, m.inner_steps), (2, 6, 3));

    let b = ExperimentSpec::from_toml_str(
        &TINY
            .replace(r#"sweep = "layers""#, r#"sweep = "budget""#)
            .replace("values = [1, 2]", "values = [25000, 100000]"),
    )
    .unwrap();
    for &arch in &b.architectures {
        for &v in &b.values {
            let m = b.cell_model(arch, v).unwrap();
            assert!(count_params(&m) <= v as usize);
            assert_eq!(m.layers, 6);
        }
    }

    let t = ExperimentSpec::from_toml_str(
        &TINY
            .replace(r#"sweep = "layers""#, r#"sweep = "inner_steps""#)
            .replace("values = [1, 2]", "values = [1, 4]"),
    )
    .unwrap();
    assert_eq!(t.cell_model(Arch::Ggru, 4.0).unwrap().inner_steps, 4);

    let q = ExperimentSpec::from_toml_str(
        &TINY
            .replace(r#"sweep = "layers""#, r#"sweep = "noise""#)
            .replace("values = [1, 2]", "values = [0.2, 0.5]"),
    )
    .unwrap();
    let m = q.cell_model(Arch::Sgcn, 0.5).unwrap();
    assert_eq!(q.trial_config(m, 0.5, 0).q_noise, 0.5);
}

#[test]
fn writes_tidy_deterministic_outputs() {
    let spec = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_experiment(&spec, a.path(), quiet()).unwrap();
    run_experiment(
        &spec,
        b.path(),
        RunOptions {
            workers: Some(2),
            verbose: false,
        },
    )
    .unwrap();
    for f in [RESULTS_FILE, SUMMARY_FILE] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }

    let csv = String::from_utf8(read(a.path(), RESULTS_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# graphnet sweep v1");
    assert!(lines[1].starts_with("architecture,sweep_value,accuracy_mean,accuracy_std"));
    assert_eq!(lines.len() - 2, spec.architectures.len() * spec.values.len());
    assert!(lines[2].starts_with("sgcn,1,"));
    assert!(lines.iter().skip(2).all(|l| l.ends_with(",ok")));

    let timing = String::from_utf8(read(a.path(), TIMING_FILE)).unwrap();
    assert!(timing.starts_with("# graphnet sweep-timing v1\n"));
    assert_eq!(timing.lines().count(), lines.len());

    // every row traces back to its trial seeds
    let summary: serde_json::Value = serde_json::from_slice(&read(a.path(), SUMMARY_FILE)).unwrap();
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for (c, cell) in cells.iter().zip(&ra.cells) {
        let seeds: Vec<u64> = c["trials"].as_array().unwrap().iter().map(|t| t["seed"].as_u64().unwrap()).collect();
        let want: Vec<u64> = (0..2).map(|k| spec.trial_seed(cell.architecture, cell.sweep_value, k)).collect();
        assert_eq!(seeds, want);
    }
    assert_eq!(summary["spec"]["name"], "tiny");
}

fn mtimes(dir: &Path) -> Vec<(String, std::time::SystemTime)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), e.metadata().unwrap().modified().unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn rerunning_a_completed_experiment_changes_nothing() {
    let spec = tiny();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path(), quiet()).unwrap();
    let before = mtimes(dir.path());
    let bytes: Vec<Vec<u8>> = before.iter().map(|(n, _)| read(dir.path(), n)).collect();
    std::thread::sleep(std::time::Duration::from_millis(20));
    run_experiment(&spec, dir.path(), quiet()).unwrap();
    assert_eq!(mtimes(dir.path()), before);
    let after: Vec<Vec<u8>> = before.iter().map(|(n, _)| read(dir.path(), n)).collect();
    assert_eq!(bytes, after);
}

#[test]
fn resumes_missing_trials_only() {
    let spec = tiny();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path(), quiet()).unwrap();
    let results = read(dir.path(), RESULTS_FILE);

    // drop two trials from the state, tag the others so a rerun would show
    let path = dir.path().join(STATE_FILE);
    let mut state: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    let trials = state["trials"].as_array_mut().unwrap();
    assert_eq!(trials.len(), 8);
    trials.truncate(6);
    for t in trials.iter_mut() {
        t["train_seconds"] = serde_json::json!(-1.0);
    }
    fs::write(&path, serde_json::to_vec(&state).unwrap()).unwrap();

    let r = run_experiment(&spec, dir.path(), quiet()).unwrap();
    let kept = r.cells.iter().flat_map(|c| &c.trials).filter(|t| t.train_seconds == -1.0).count();
    assert_eq!(kept, 6);
    assert_eq!(read(dir.path(), RESULTS_FILE), results);
}

#[test]
fn state_from_another_spec_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&tiny(), dir.path(), quiet()).unwrap();
    let mut other = tiny();
    other.master_seed += 1;
    assert!(matches!(
        run_experiment(&other, dir.path(), quiet()),
        Err(ExperimentError::StateMismatch { .. })
    ));
}

#[test]
fn infeasible_budget_cells_are_recorded_and_the_rest_runs() {
    let spec = ExperimentSpec::from_toml_str(
        &TINY
            .replace(r#"sweep = "layers""#, r#"sweep = "budget""#)
            .replace("values = [1, 2]", "values = [50, 3000]")
            .replace("hidden = 6\n", "")
            .replace("trials = 2", "trials = 1"),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&spec, dir.path(), quiet()).unwrap();
    let bad = r.cell(Arch::Ggru, 50.0).unwrap();
    assert!(bad.error.is_some() && bad.trials.is_empty());
    let good = r.cell(Arch::Ggru, 3000.0).unwrap();
    assert!(good.error.is_none() && good.accuracy_mean.is_finite());
    let csv = String::from_utf8(read(dir.path(), RESULTS_FILE)).unwrap();
    assert!(csv.contains("ggru,50,,,0,0,,,infeasible"));
}

#[test]
fn learning_speed_sweep_emits_series() {
    let spec = ExperimentSpec::from_toml_str(
        &TINY
            .replace(r#"sweep = "layers""#, r#"sweep = "learning_speed""#)
            .replace("values = [1, 2]", "values = [0, 3, 6]"),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec, dir.path(), quiet()).unwrap();
    let csv = String::from_utf8(read(dir.path(), CURVE_FILE)).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows[0].starts_with("sgcn,0,") && rows[5].starts_with("ggru,6,"));
    let timing = String::from_utf8(read(dir.path(), CURVE_TIMING_FILE)).unwrap();
    assert!(timing.lines().nth(2).unwrap().starts_with("sgcn,0,0.000000"));
}

#[test]
fn dirichlet_baseline_summary() {
    let a = run_dirichlet_baseline(12, 0.1, 3, Execution::Sequential).unwrap();
    let b = run_dirichlet_baseline(12, 0.1, 3, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.accuracies.len(), 12);
    assert!(a.warnings.is_empty());
    let clean = run_dirichlet_baseline(10, 0.0, 3, Execution::Parallel).unwrap();
    assert!(clean.accuracy_mean > 0.95);
    assert!(run_dirichlet_baseline(0, 0.1, 3, Execution::Sequential).is_err());
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    let mut stack = vec![root];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "toml") {
                let spec = ExperimentSpec::from_path(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
                assert_eq!(p.file_stem().unwrap().to_str().unwrap(), spec.name);
                n += 1;
            }
        }
    }
    assert!(n >= 5);
}
