use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{accuracy, mean_std, weighted_loss, LrDecay, LrScheduler, Optimizer, OptimizerKind, TrainError};
use crate::exec::{derive_seed, Execution};
use crate::graph::{InstanceSource, Task};
use crate::models::{count_params, Arch, Mode, ModelConfig, Network};
use crate::tensor::Tape;

/// Iterations averaged into `rolling_loss`.
pub const ROLLING_WINDOW: usize = 100;
/// Graphs per timed batch.
pub const BATCH_GRAPHS: usize = 100;
/// Timed batches; the median is reported.
pub const BATCH_REPEATS: usize = 3;

// seed streams under the run seed
const STREAM_PATTERN: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EVAL: u64 = 3;
const STREAM_CURVE: u64 = 4;
const STREAM_TIMING: u64 = 5;

/// Optimizer and learning rate used when none is given: Adam at 0.00075,
/// except the graph LSTM which uses SGD at 0.075 (matching) or 0.0075
/// (clustering).
pub fn default_optimizer(arch: Arch, task: Task) -> (OptimizerKind, f64) {
    match (arch, task) {
        (Arch::Glstm, Task::Matching) => (OptimizerKind::Sgd, 0.075),
        (Arch::Glstm, Task::Clustering) => (OptimizerKind::Sgd, 0.0075),
        _ => (OptimizerKind::Adam, 0.00075),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub task: Task,
    pub q_noise: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub iterations: usize,
    /// Fresh instances evaluated after training.
    pub eval_instances: usize,
    pub seed: u64,
    /// Iterations (counted as completed updates) after which accuracy is
    /// measured for a learning-speed curve; 0 means before training.
    pub curve_points: Vec<usize>,
    pub curve_instances: usize,
    pub measure_batch_time: bool,
}

impl TrainConfig {
    /// 5000 iterations, 100 evaluation instances and the default optimizer
    /// for the architecture and task.
    pub fn new(model: ModelConfig, task: Task, q_noise: f64, seed: u64) -> Self {
        let (optimizer, lr) = default_optimizer(model.arch, task);
        TrainConfig {
            model,
            task,
            q_noise,
            optimizer,
            lr,
            iterations: 5000,
            eval_instances: 100,
            seed,
            curve_points: Vec::new(),
            curve_instances: 20,
            measure_batch_time: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.model.input_dim != self.task.input_dim() || self.model.n_classes != self.task.n_classes() {
            return bad(format!(
                "model dims {}→{} do not fit task {}",
                self.model.input_dim, self.model.n_classes, self.task
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !self.curve_points.windows(2).all(|w| w[0] < w[1]) {
            return bad("curve points must be strictly increasing".into());
        }
        if self.curve_points.last().is_some_and(|&p| p > self.iterations) {
            return bad(format!("curve point beyond {} iterations", self.iterations));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub iteration: usize,
    pub loss: f64,
    /// Mean loss of the last (up to) 100 iterations.
    pub rolling_loss: f64,
    /// Learning rate used for this iteration's update.
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub iteration: usize,
    /// Training time only; evaluation is excluded.
    pub elapsed_seconds: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_params: usize,
    pub rows: Vec<TrainRow>,
    /// Cumulative wall-clock per row.
    pub elapsed_ms: Vec<f64>,
    pub decays: Vec<LrDecay>,
    pub eval_accuracies: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub curve: Vec<LearningPoint>,
    pub batch_time_ms: Option<f64>,
}

fn write_float(out: &mut impl Write, v: f64) -> io::Result<()> {
    write!(out, "{v}")
}

impl TrainReport {
    /// Deterministic per-iteration log.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# graphnet train v1")?;
        writeln!(out, "iteration,loss,rolling_loss,lr")?;
        for r in &self.rows {
            write!(out, "{},", r.iteration)?;
            write_float(&mut out, r.loss)?;
            write!(out, ",")?;
            write_float(&mut out, r.rolling_loss)?;
            write!(out, ",")?;
            write_float(&mut out, r.lr)?;
            writeln!(out)?;
        }
        Ok(())
    }

    /// Wall-clock sidecar of [`TrainReport::write_csv`].
    pub fn write_timing_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# graphnet train-timing v1")?;
        writeln!(out, "iteration,elapsed_ms")?;
        for (r, ms) in self.rows.iter().zip(&self.elapsed_ms) {
            writeln!(out, "{},{ms:.3}", r.iteration)?;
        }
        Ok(())
    }

    pub fn write_curve_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# graphnet learning-speed v1")?;
        writeln!(out, "architecture,iteration,accuracy")?;
        for p in &self.curve {
            writeln!(out, "{},{},{}", self.config.model.arch, p.iteration, p.accuracy)?;
        }
        Ok(())
    }

    /// Wall-clock sidecar of [`TrainReport::write_curve_csv`].
    pub fn write_curve_timing_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "# graphnet learning-speed-timing v1")?;
        writeln!(out, "architecture,iteration,elapsed_seconds")?;
        for p in &self.curve {
            writeln!(out, "{},{},{:.6}", self.config.model.arch, p.iteration, p.elapsed_seconds)?;
        }
        Ok(())
    }

    /// Configuration and outcome; timings are left out so the summary is
    /// reproducible.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "n_params": self.n_params,
            "iterations_run": self.rows.len(),
            "final_rolling_loss": self.rows.last().map(|r| r.rolling_loss),
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "eval_instances": self.eval_accuracies.len(),
            "lr_decays": self.decays,
        })
    }
}

/// Per-instance accuracy of `net` in inference mode on `seeds.len()` fresh
/// instances.
pub fn evaluate(
    net: &Network,
    source: &InstanceSource,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<f64>, TrainError> {
    exec.map(seeds, |&s| -> Result<f64, TrainError> {
        let inst = source.generate(s)?;
        let logits = net.predict(&inst.features(), &inst.graph.adjacency)?;
        Ok(accuracy(&logits, &inst.targets))
    })
    .into_iter()
    .collect()
}

/// Median over [`BATCH_REPEATS`] runs of the wall-clock (ms) of a forward
/// and backward pass over [`BATCH_GRAPHS`] pre-generated instances.
pub fn measure_batch_time(net: &Network, source: &InstanceSource, seed: u64) -> Result<f64, TrainError> {
    let instances = (0..BATCH_GRAPHS)
        .map(|k| source.generate(derive_seed(seed, &[STREAM_TIMING, k as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let features: Vec<_> = instances.iter().map(|i| i.features()).collect();
    let mut times = Vec::with_capacity(BATCH_REPEATS);
    for _ in 0..BATCH_REPEATS {
        let start = Instant::now();
        for (inst, x) in instances.iter().zip(&features) {
            let mut tape = Tape::new();
            let fwd = net.forward(&mut tape, x, &inst.graph.adjacency, Mode::GraphStats)?;
            let loss = weighted_loss(&mut tape, fwd.logits, &inst.targets)?;
            tape.backward(loss)?;
        }
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Trains a fresh network; see [`train_network`].
pub fn train(config: &TrainConfig, exec: Execution) -> Result<TrainReport, TrainError> {
    train_network(config, exec).map(|(report, _)| report)
}

/// Trains on one freshly generated instance per iteration, then evaluates
/// on fresh instances. Returns the report and the trained network.
pub fn train_network(config: &TrainConfig, exec: Execution) -> Result<(TrainReport, Network), TrainError> {
    config.validate()?;
    let seed = config.seed;
    let source = InstanceSource::new(config.task, config.q_noise, derive_seed(seed, &[STREAM_PATTERN]))?;
    let mut net = Network::new(config.model.clone(), derive_seed(seed, &[STREAM_INIT]))?;
    let mut opt = Optimizer::new(config.optimizer, config.lr, net.params());
    let mut sched = LrScheduler::new(config.lr);
    let curve_seeds: Vec<u64> = (0..config.curve_instances)
        .map(|k| derive_seed(seed, &[STREAM_CURVE, k as u64]))
        .collect();

    let mut rows = Vec::with_capacity(config.iterations);
    let mut elapsed_ms = Vec::with_capacity(config.iterations);
    let mut curve = Vec::new();
    let mut recent = std::collections::VecDeque::with_capacity(ROLLING_WINDOW);
    let mut train_secs = 0.0;

    let record_curve = |net: &Network, it: usize, secs: f64, curve: &mut Vec<LearningPoint>| {
        let accs = evaluate(net, &source, &curve_seeds, exec)?;
        curve.push(LearningPoint {
            iteration: it,
            elapsed_seconds: secs,
            accuracy: mean_std(&accs).0,
        });
        Ok::<_, TrainError>(())
    };
    let mut points = config.curve_points.iter().copied().peekable();
    if points.next_if_eq(&0).is_some() {
        record_curve(&net, 0, 0.0, &mut curve)?;
    }

    for it in 0..config.iterations {
        let start = Instant::now();
        let inst = source.generate(derive_seed(seed, &[STREAM_TRAIN, it as u64]))?;
        let x = inst.features();
        let mut tape = Tape::new();
        let fwd = net.forward(&mut tape, &x, &inst.graph.adjacency, Mode::GraphStats)?;
        let loss = weighted_loss(&mut tape, fwd.logits, &inst.targets)?;
        let lv = tape.value(loss).data()[0];
        let lr = opt.lr();
        if !lv.is_finite() {
            return Err(TrainError::NonFinite { iteration: it, lr });
        }
        tape.backward(loss)?;
        let store = net.params_mut();
        store.zero_grads();
        store.collect_grads(&tape, &fwd.bindings);
        opt.step(store);
        net.absorb_batch_stats(&tape, &fwd);
        opt.set_lr(sched.observe(it, lv));

        if recent.len() == ROLLING_WINDOW {
            recent.pop_front();
        }
        recent.push_back(lv);
        let rolling = recent.iter().sum::<f64>() / recent.len() as f64;
        rows.push(TrainRow {
            iteration: it,
            loss: lv,
            rolling_loss: rolling,
            lr,
        });
        train_secs += start.elapsed().as_secs_f64();
        elapsed_ms.push(train_secs * 1e3);

        if points.next_if_eq(&(it + 1)).is_some() {
            record_curve(&net, it + 1, train_secs, &mut curve)?;
        }
    }

    let eval_seeds: Vec<u64> = (0..config.eval_instances)
        .map(|k| derive_seed(seed, &[STREAM_EVAL, k as u64]))
        .collect();
    let eval_accuracies = evaluate(&net, &source, &eval_seeds, exec)?;
    let (accuracy_mean, accuracy_std) = mean_std(&eval_accuracies);
    let batch_time_ms = if config.measure_batch_time {
        Some(measure_batch_time(&net, &source, seed)?)
    } else {
        None
    };
    let report = TrainReport {
        config: config.clone(),
        n_params: count_params(&config.model),
        rows,
        elapsed_ms,
        decays: sched.decays().to_vec(),
        eval_accuracies,
        accuracy_mean,
        accuracy_std,
        curve,
        batch_time_ms,
    };
    Ok((report, net))
}
