//! Experiment sweeps: a grid of (architecture × sweep value × trial)
//! training runs with resumable state and plot-ready output.
//!
//! Output directory layout:
//!
//! | file | contents |
//! |------|----------|
//! | `state.json` | completed trials, rewritten after each one |
//! | `results.csv` | one row per cell, deterministic |
//! | `timing.csv` | batch and training times per cell |
//! | `summary.json` | spec, cells and trial seeds, deterministic |
//! | `learning_speed.csv`, `learning_speed_timing.csv` | learning-speed sweeps only |

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{derive_seed, with_workers, Execution};
use crate::graph::{make_clustering_instance, Task};
use crate::models::{count_params, solve_hidden_for_budget, Arch, ModelConfig, ModelError};
use crate::training::{mean_std, train, LearningPoint, OptimizerKind, TrainConfig};
use crate::variational::solve_instance;

const STATE_FORMAT: &str = "graphnet-sweep-state-v1";
pub const STATE_FILE: &str = "state.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVE_FILE: &str = "learning_speed.csv";
pub const CURVE_TIMING_FILE: &str = "learning_speed_timing.csv";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("state file {path} belongs to a different spec")]
    StateMismatch { path: PathBuf },
    #[error("state file: {0}")]
    State(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Inter-community probability q.
    Noise,
    /// Layer count L.
    Layers,
    /// Parameter budget B; H is solved per architecture.
    Budget,
    /// Inner iterations T.
    InnerSteps,
    /// Values are the iterations at which accuracy is measured.
    LearningSpeed,
}

impl SweepVar {
    fn integral(self) -> bool {
        !matches!(self, SweepVar::Noise)
    }
}

fn default_q() -> f64 {
    0.1
}
fn default_layers() -> usize {
    6
}
fn default_inner_steps() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_iterations() -> usize {
    5000
}
fn default_eval() -> usize {
    100
}
fn default_curve_instances() -> usize {
    20
}

/// Hyperparameters held constant across the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixed {
    #[serde(default = "default_q")]
    pub q_noise: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Hidden width; takes precedence over `budget`.
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "default_true")]
    pub residual: bool,
    #[serde(default = "default_true")]
    pub batch_norm: bool,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_eval")]
    pub eval_instances: usize,
    #[serde(default = "default_curve_instances")]
    pub curve_instances: usize,
    #[serde(default = "default_true")]
    pub measure_batch_time: bool,
    /// Overrides the per-architecture default optimizer.
    #[serde(default)]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default)]
    pub lr: Option<f64>,
}

impl Default for Fixed {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub task: Task,
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub architectures: Vec<Arch>,
    #[serde(default)]
    pub fixed: Fixed,
    pub trials: usize,
    pub master_seed: u64,
}

/// Everything needed to run one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    pub architecture: Arch,
    pub sweep_value: f64,
    pub trial: usize,
    pub config: TrainConfig,
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let spec: ExperimentSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("name '{}' must be non-empty and use [A-Za-z0-9-_.]", self.name));
        }
        if self.values.is_empty() {
            return bad("sweep values are empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.architectures.is_empty() {
            return bad("no architectures".into());
        }
        for (i, a) in self.architectures.iter().enumerate() {
            if self.architectures[..i].contains(a) {
                return bad(format!("architecture {a} listed twice"));
            }
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return bad(format!("sweep value {v} is not finite"));
            }
            if self.values[..i].contains(&v) {
                return bad(format!("sweep value {v} listed twice"));
            }
            if self.sweep.integral() && (v < 0.0 || v.fract() != 0.0) {
                return bad(format!("{:?} sweep needs non-negative integers, got {v}", self.sweep));
            }
            match self.sweep {
                SweepVar::Noise if !(0.0..=1.0).contains(&v) => return bad(format!("q = {v} outside [0, 1]")),
                SweepVar::Layers | SweepVar::Budget | SweepVar::InnerSteps if v == 0.0 => {
                    return bad(format!("{:?} sweep value must be positive", self.sweep))
                }
                _ => {}
            }
        }
        if self.sweep == SweepVar::LearningSpeed {
            if !self.values.windows(2).all(|w| w[0] < w[1]) {
                return bad("learning-speed iterations must increase".into());
            }
            if self.values.iter().any(|&v| v as usize > self.fixed.iterations) {
                return bad(format!("learning-speed point beyond {} iterations", self.fixed.iterations));
            }
        }
        if self.sweep != SweepVar::Budget && self.fixed.hidden.is_none() && self.fixed.budget.is_none() {
            return bad("fixed.hidden or fixed.budget is required".into());
        }
        if self.fixed.hidden == Some(0) {
            return bad("fixed.hidden must be positive".into());
        }
        if self.fixed.lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return bad("fixed.lr must be positive".into());
        }
        Ok(())
    }

    /// Seed of one trial; stable under reordering or extending the grid.
    pub fn trial_seed(&self, arch: Arch, value: f64, trial: usize) -> u64 {
        let arch_id = Arch::ALL.iter().position(|&a| a == arch).expect("listed") as u64;
        derive_seed(self.master_seed, &[arch_id, value.to_bits(), trial as u64])
    }

    /// Model for one cell; errors when a budget cannot be met.
    pub fn cell_model(&self, arch: Arch, value: f64) -> Result<ModelConfig, ModelError> {
        let f = &self.fixed;
        let mut m = ModelConfig::new(arch, f.layers, 1, self.task.input_dim(), self.task.n_classes());
        m.inner_steps = f.inner_steps;
        m.residual = f.residual;
        m.batch_norm = f.batch_norm;
        match self.sweep {
            SweepVar::Layers => m.layers = value as usize,
            SweepVar::InnerSteps => m.inner_steps = value as usize,
            _ => {}
        }
        m.hidden = match (self.sweep, f.hidden, f.budget) {
            (SweepVar::Budget, _, _) => solve_hidden_for_budget(&m, value as usize)?,
            (_, Some(h), _) => h,
            (_, None, Some(b)) => solve_hidden_for_budget(&m, b)?,
            (_, None, None) => unreachable!("validated"),
        };
        Ok(m)
    }

    pub fn trial_config(&self, model: ModelConfig, value: f64, trial: usize) -> TrainConfig {
        let f = &self.fixed;
        let q = if self.sweep == SweepVar::Noise { value } else { f.q_noise };
        let seed = self.trial_seed(model.arch, value, trial);
        let mut c = TrainConfig::new(model, self.task, q, seed);
        if let Some(kind) = f.optimizer {
            c.optimizer = kind;
        }
        if let Some(lr) = f.lr {
            c.lr = lr;
        }
        c.iterations = f.iterations;
        c.eval_instances = f.eval_instances;
        c.curve_instances = f.curve_instances;
        c.measure_batch_time = f.measure_batch_time;
        if self.sweep == SweepVar::LearningSpeed {
            c.curve_points = self.values.iter().map(|&v| v as usize).collect();
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub architecture: Arch,
    pub sweep_value: f64,
    pub trial: usize,
    pub seed: u64,
    /// `None` when training failed.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    pub final_rolling_loss: Option<f64>,
    pub lr_decays: usize,
    pub curve: Vec<LearningPoint>,
    pub batch_time_ms: Option<f64>,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub architecture: Arch,
    pub sweep_value: f64,
    pub hidden: Option<usize>,
    pub n_params: Option<usize>,
    /// Set when the cell could not be configured.
    pub error: Option<String>,
    pub trials: Vec<TrialRecord>,
    /// Over successful trials.
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub failed_trials: usize,
    pub batch_time_ms: Option<f64>,
}

impl CellSummary {
    fn accuracies(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.accuracy).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    /// Architecture-major, in spec order.
    pub cells: Vec<CellSummary>,
}

impl ExperimentResults {
    pub fn cell(&self, arch: Arch, value: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.architecture == arch && c.sweep_value == value)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct State {
    format: String,
    spec: ExperimentSpec,
    trials: Vec<TrialRecord>,
}

fn load_state(path: &Path, spec: &ExperimentSpec) -> Result<Vec<TrialRecord>, ExperimentError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let state: State = serde_json::from_str(&text)?;
    if state.format != STATE_FORMAT || &state.spec != spec {
        return Err(ExperimentError::StateMismatch { path: path.to_path_buf() });
    }
    Ok(state.trials)
}

fn save_state(path: &Path, spec: &ExperimentSpec, trials: &[TrialRecord]) -> io::Result<()> {
    let state = State {
        format: STATE_FORMAT.into(),
        spec: spec.clone(),
        trials: trials.to_vec(),
    };
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(&state).map_err(io::Error::other)?)?;
    fs::rename(tmp, path)
}

/// Leaves the file (and its mtime) alone when the content is unchanged.
fn write_if_changed(path: &Path, content: &[u8]) -> io::Result<()> {
    if fs::read(path).is_ok_and(|old| old == content) {
        return Ok(());
    }
    fs::write(path, content)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads for trials; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Progress lines on stderr.
    pub verbose: bool,
}

type TrialKey = (Arch, u64, usize);

fn key(t: &TrialRecord) -> TrialKey {
    (t.architecture, t.sweep_value.to_bits(), t.trial)
}

fn run_trial(plan: &TrialPlan) -> TrialRecord {
    let c = &plan.config;
    let base = TrialRecord {
        architecture: plan.architecture,
        sweep_value: plan.sweep_value,
        trial: plan.trial,
        seed: c.seed,
        accuracy: None,
        error: None,
        final_rolling_loss: None,
        lr_decays: 0,
        curve: Vec::new(),
        batch_time_ms: None,
        train_seconds: 0.0,
    };
    match train(c, Execution::Sequential) {
        Ok(r) => TrialRecord {
            accuracy: Some(r.accuracy_mean),
            final_rolling_loss: r.rows.last().map(|row| row.rolling_loss),
            lr_decays: r.decays.len(),
            curve: r.curve,
            batch_time_ms: r.batch_time_ms,
            train_seconds: r.elapsed_ms.last().copied().unwrap_or(0.0) / 1e3,
            ..base
        },
        Err(e) => TrialRecord {
            error: Some(e.to_string()),
            ..base
        },
    }
}

/// Runs every pending trial of `spec`, persisting each one to
/// `out_dir/state.json` as it completes, then writes all outputs.
/// Completed trials found in the state file are not rerun.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path, opts: RunOptions) -> Result<ExperimentResults, ExperimentError> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let state_path = out_dir.join(STATE_FILE);
    let done = load_state(&state_path, spec)?;
    let done_keys: HashMap<TrialKey, usize> = done.iter().enumerate().map(|(i, t)| (key(t), i)).collect();

    let mut cells = Vec::new();
    let mut pending = Vec::new();
    for &arch in &spec.architectures {
        for &value in &spec.values {
            let model = spec.cell_model(arch, value);
            if let Ok(m) = &model {
                for trial in 0..spec.trials {
                    if !done_keys.contains_key(&(arch, value.to_bits(), trial)) {
                        pending.push(TrialPlan {
                            architecture: arch,
                            sweep_value: value,
                            trial,
                            config: spec.trial_config(m.clone(), value, trial),
                        });
                    }
                }
            }
            cells.push((arch, value, model));
        }
    }

    let total = pending.len();
    let records = Mutex::new(done);
    let persisted: Mutex<io::Result<()>> = Mutex::new(Ok(()));
    with_workers(opts.workers, || {
        Execution::Parallel.map(&pending, |plan| {
            let rec = run_trial(plan);
            let mut all = records.lock().expect("poisoned");
            if opts.verbose {
                let n = all.len() + 1;
                match (&rec.accuracy, &rec.error) {
                    (Some(a), _) => eprintln!(
                        "[{}] {} {}={} trial {}: accuracy {a:.4} ({n} done, {} pending at start)",
                        spec.name, plan.architecture, sweep_label(spec.sweep), plan.sweep_value, plan.trial, total
                    ),
                    (_, e) => eprintln!(
                        "[{}] {} {}={} trial {} failed: {}",
                        spec.name,
                        plan.architecture,
                        sweep_label(spec.sweep),
                        plan.sweep_value,
                        plan.trial,
                        e.as_deref().unwrap_or("?")
                    ),
                }
            }
            all.push(rec);
            all.sort_by_key(|t| (t.architecture, t.sweep_value.to_bits(), t.trial));
            let saved = save_state(&state_path, spec, &all);
            let mut p = persisted.lock().expect("poisoned");
            if p.is_ok() {
                *p = saved;
            }
        })
    });
    persisted.into_inner().expect("poisoned")?;
    let records = records.into_inner().expect("poisoned");

    let summaries = cells
        .into_iter()
        .map(|(arch, value, model)| summarize(spec, arch, value, model, &records))
        .collect();
    let results = ExperimentResults {
        spec: spec.clone(),
        cells: summaries,
    };
    emit_plot_data(&results, out_dir)?;
    Ok(results)
}

fn summarize(
    spec: &ExperimentSpec,
    arch: Arch,
    value: f64,
    model: Result<ModelConfig, ModelError>,
    records: &[TrialRecord],
) -> CellSummary {
    let (hidden, n_params, error) = match &model {
        Ok(m) => (Some(m.hidden), Some(count_params(m)), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let trials: Vec<TrialRecord> = if model.is_ok() {
        (0..spec.trials)
            .filter_map(|k| records.iter().find(|t| key(t) == (arch, value.to_bits(), k)).cloned())
            .collect()
    } else {
        Vec::new()
    };
    let mut cell = CellSummary {
        architecture: arch,
        sweep_value: value,
        hidden,
        n_params,
        error,
        failed_trials: trials.iter().filter(|t| t.accuracy.is_none()).count(),
        batch_time_ms: None,
        accuracy_mean: f64::NAN,
        accuracy_std: f64::NAN,
        trials,
    };
    (cell.accuracy_mean, cell.accuracy_std) = mean_std(&cell.accuracies());
    let times: Vec<f64> = cell.trials.iter().filter_map(|t| t.batch_time_ms).collect();
    if !times.is_empty() {
        cell.batch_time_ms = Some(times.iter().sum::<f64>() / times.len() as f64);
    }
    cell
}

fn sweep_label(v: SweepVar) -> &'static str {
    match v {
        SweepVar::Noise => "q",
        SweepVar::Layers => "L",
        SweepVar::Budget => "B",
        SweepVar::InnerSteps => "T",
        SweepVar::LearningSpeed => "iteration",
    }
}

fn opt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Deterministic per-cell table.
pub fn results_csv(results: &ExperimentResults) -> String {
    let mut s = String::from("# graphnet sweep v1\n");
    s.push_str("architecture,sweep_value,accuracy_mean,accuracy_std,trials_ok,trials_failed,hidden,n_params,status\n");
    for c in &results.cells {
        let ok = c.trials.len() - c.failed_trials;
        let status = match (&c.error, ok) {
            (Some(_), _) => "infeasible",
            (None, 0) => "failed",
            _ => "ok",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            c.architecture,
            c.sweep_value,
            opt_num(c.accuracy_mean),
            opt_num(c.accuracy_std),
            ok,
            c.failed_trials,
            c.hidden.map(|h| h.to_string()).unwrap_or_default(),
            c.n_params.map(|n| n.to_string()).unwrap_or_default(),
            status
        );
    }
    s
}

/// Wall-clock sidecar of [`results_csv`].
pub fn timing_csv(results: &ExperimentResults) -> String {
    let mut s = String::from("# graphnet sweep-timing v1\n");
    s.push_str("architecture,sweep_value,batch_time_ms,train_seconds_mean\n");
    for c in &results.cells {
        let secs: Vec<f64> = c.trials.iter().filter(|t| t.accuracy.is_some()).map(|t| t.train_seconds).collect();
        let _ = writeln!(
            s,
            "{},{},{},{}",
            c.architecture,
            c.sweep_value,
            c.batch_time_ms.map(|t| format!("{t:.3}")).unwrap_or_default(),
            if secs.is_empty() {
                String::new()
            } else {
                format!("{:.3}", secs.iter().sum::<f64>() / secs.len() as f64)
            }
        );
    }
    s
}

fn curve_points(c: &CellSummary) -> Vec<(usize, Vec<f64>, Vec<f64>)> {
    let ok: Vec<&TrialRecord> = c.trials.iter().filter(|t| t.accuracy.is_some()).collect();
    let Some(first) = ok.first() else { return Vec::new() };
    (0..first.curve.len())
        .map(|k| {
            let acc = ok.iter().map(|t| t.curve[k].accuracy).collect();
            let secs = ok.iter().map(|t| t.curve[k].elapsed_seconds).collect();
            (first.curve[k].iteration, acc, secs)
        })
        .collect()
}

/// Per-architecture accuracy series of a learning-speed sweep.
pub fn learning_speed_csv(results: &ExperimentResults) -> String {
    let mut s = String::from("# graphnet learning-speed v1\n");
    s.push_str("architecture,iteration,accuracy_mean,accuracy_std\n");
    let mut seen = Vec::new();
    for c in &results.cells {
        if seen.contains(&c.architecture) {
            continue;
        }
        seen.push(c.architecture);
        for (it, acc, _) in curve_points(c) {
            let (m, sd) = mean_std(&acc);
            let _ = writeln!(s, "{},{it},{},{}", c.architecture, opt_num(m), opt_num(sd));
        }
    }
    s
}

/// Wall-clock sidecar of [`learning_speed_csv`].
pub fn learning_speed_timing_csv(results: &ExperimentResults) -> String {
    let mut s = String::from("# graphnet learning-speed-timing v1\n");
    s.push_str("architecture,iteration,elapsed_seconds_mean\n");
    let mut seen = Vec::new();
    for c in &results.cells {
        if seen.contains(&c.architecture) {
            continue;
        }
        seen.push(c.architecture);
        for (it, _, secs) in curve_points(c) {
            let _ = writeln!(s, "{},{it},{:.6}", c.architecture, mean_std(&secs).0);
        }
    }
    s
}

/// Spec, cells and per-trial seeds and accuracies, without timings.
pub fn summary_json(results: &ExperimentResults) -> serde_json::Value {
    let cells: Vec<_> = results
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "architecture": c.architecture,
                "sweep_value": c.sweep_value,
                "hidden": c.hidden,
                "n_params": c.n_params,
                "error": c.error,
                "accuracy_mean": c.accuracy_mean.is_finite().then_some(c.accuracy_mean),
                "accuracy_std": c.accuracy_std.is_finite().then_some(c.accuracy_std),
                "trials": c.trials.iter().map(|t| serde_json::json!({
                    "trial": t.trial,
                    "seed": t.seed,
                    "accuracy": t.accuracy,
                    "error": t.error,
                    "final_rolling_loss": t.final_rolling_loss,
                    "lr_decays": t.lr_decays,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({
        "format": "graphnet-sweep-summary-v1",
        "spec": results.spec,
        "cells": cells,
    })
}

/// Writes the CSV tables and JSON summary; files whose content would not
/// change are left untouched.
pub fn emit_plot_data(results: &ExperimentResults, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files = vec![
        (RESULTS_FILE, results_csv(results)),
        (TIMING_FILE, timing_csv(results)),
        (
            SUMMARY_FILE,
            serde_json::to_string_pretty(&summary_json(results)).map_err(io::Error::other)? + "\n",
        ),
    ];
    if results.spec.sweep == SweepVar::LearningSpeed {
        files.push((CURVE_FILE, learning_speed_csv(results)));
        files.push((CURVE_TIMING_FILE, learning_speed_timing_csv(results)));
    }
    let mut written = Vec::new();
    for (name, content) in files {
        let path = out_dir.join(name);
        write_if_changed(&path, content.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirichletSummary {
    pub n_instances: usize,
    pub q_noise: f64,
    pub seed: u64,
    /// Accuracy per solved instance, in instance order.
    pub accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Nodes in unseeded components over all instances.
    pub unseeded_nodes: usize,
    /// One message per excluded instance.
    pub warnings: Vec<String>,
}

/// Solves `n_instances` fresh clustering instances with the Dirichlet
/// baseline. Instances whose generation or solve fails are excluded and
/// reported in `warnings`.
pub fn run_dirichlet_baseline(
    n_instances: usize,
    q_noise: f64,
    seed: u64,
    exec: Execution,
) -> Result<DirichletSummary, ExperimentError> {
    if n_instances == 0 {
        return Err(ExperimentError::InvalidSpec("n_instances must be >= 1".into()));
    }
    let outcomes = exec.map_range(n_instances, |k| {
        let inst = make_clustering_instance(q_noise, derive_seed(seed, &[k as u64])).map_err(|e| e.to_string())?;
        solve_instance(&inst, Execution::Sequential).map_err(|e| e.to_string())
    });
    let mut accuracies = Vec::new();
    let mut unseeded_nodes = 0;
    let mut warnings = Vec::new();
    for (k, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok((res, acc)) => {
                accuracies.push(acc);
                unseeded_nodes += res.unseeded.len();
            }
            Err(e) => warnings.push(format!("instance {k} excluded: {e}")),
        }
    }
    let (accuracy_mean, accuracy_std) = mean_std(&accuracies);
    Ok(DirichletSummary {
        n_instances,
        q_noise,
        seed,
        accuracies,
        accuracy_mean,
        accuracy_std,
        unseeded_nodes,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_defaults() {
        let f = Fixed::default();
        assert_eq!((f.layers, f.inner_steps, f.iterations), (6, 3, 5000));
        assert!(f.residual && f.batch_norm);
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let spec = ExperimentSpec::from_toml_str(
            r#"
            name = "t"
            task = "matching"
            sweep = "layers"
            values = [1, 2]
            architectures = ["sgcn", "ggru"]
            trials = 3
            master_seed = 1
            [fixed]
            hidden = 4
            "#,
        )
        .unwrap();
        let mut seeds = Vec::new();
        for &a in &spec.architectures {
            for &v in &spec.values {
                for t in 0..3 {
                    seeds.push(spec.trial_seed(a, v, t));
                }
            }
        }
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 12);
    }
}
