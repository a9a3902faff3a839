use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use graphnet::exec::{derive_seed, workers_from_env, Execution, WORKERS_ENV};
use graphnet::experiment::{run_dirichlet_baseline, run_experiment, ExperimentSpec, RunOptions};
use graphnet::gradcheck::{run_suite, TOLERANCE};
use graphnet::graph::{read_instance, write_instance, InstanceSource, Task};
use graphnet::models::{save_checkpoint, solve_hidden_for_budget, Arch, ModelConfig};
use graphnet::training::{train_network, OptimizerKind, TrainConfig};
use graphnet::variational::solve_instance;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "graphnet", version, about = "Graph RNN / graph ConvNet benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write task instances to files.
    Gen(GenArgs),
    /// Train and evaluate one model.
    Train(TrainArgs),
    /// Run an experiment sweep from a TOML config.
    Sweep(SweepArgs),
    /// Dirichlet (random walker) baseline on clustering instances.
    Dirichlet(DirichletArgs),
    /// Finite-difference gradient checks; exits nonzero on failure.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    arch: Arch,
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value_t = 6)]
    layers: usize,
    /// Hidden width; solved from --budget when absent.
    #[arg(long, conflicts_with = "budget")]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 3)]
    inner_steps: usize,
    #[arg(long)]
    no_residual: bool,
    #[arg(long)]
    no_batch_norm: bool,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 100)]
    eval_instances: usize,
    /// Defaults to the architecture's usual optimizer.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    lr: Option<f64>,
    /// Record accuracy every this many iterations.
    #[arg(long)]
    curve_every: Option<usize>,
    #[arg(long)]
    batch_time: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Trials run concurrently; defaults to $GRAPHNET_WORKERS or all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct DirichletArgs {
    /// Solve these instance files and write per-node assignments.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn gen(a: &GenArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let source = InstanceSource::new(a.task, a.q, derive_seed(a.seed, &[0]))?;
    for k in 0..a.count {
        let inst = source.generate(derive_seed(a.seed, &[1, k as u64]))?;
        let path = a.out.join(format!("{}-{k:04}.txt", a.task));
        let mut f = create(&path)?;
        write_instance(&inst, &mut f)?;
        f.flush()?;
    }
    eprintln!("wrote {} {} instances to {}", a.count, a.task, a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut model = ModelConfig::new(a.arch, a.layers, 1, a.task.input_dim(), a.task.n_classes());
    model.inner_steps = a.inner_steps;
    model.residual = !a.no_residual;
    model.batch_norm = !a.no_batch_norm;
    model.hidden = match a.hidden {
        Some(h) => h,
        None => solve_hidden_for_budget(&model, a.budget)?,
    };
    let mut cfg = TrainConfig::new(model, a.task, a.q, a.seed);
    if let Some(k) = a.optimizer {
        cfg.optimizer = k;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.iterations = a.iterations;
    cfg.eval_instances = a.eval_instances;
    cfg.measure_batch_time = a.batch_time;
    if let Some(every) = a.curve_every {
        if every == 0 {
            bail!("--curve-every must be positive");
        }
        cfg.curve_points = (0..=a.iterations).step_by(every).collect();
    }

    let (report, net) = train_network(&cfg, Execution::default())?;
    fs::create_dir_all(&a.out)?;
    let mut f = create(&a.out.join("train.csv"))?;
    report.write_csv(&mut f)?;
    f.flush()?;
    let mut f = create(&a.out.join("train_timing.csv"))?;
    report.write_timing_csv(&mut f)?;
    f.flush()?;
    if !report.curve.is_empty() {
        let mut f = create(&a.out.join("learning_speed.csv"))?;
        report.write_curve_csv(&mut f)?;
        f.flush()?;
        let mut f = create(&a.out.join("learning_speed_timing.csv"))?;
        report.write_curve_timing_csv(&mut f)?;
        f.flush()?;
    }
    fs::write(
        a.out.join("summary.json"),
        serde_json::to_string_pretty(&report.summary_json())? + "\n",
    )?;
    let timing = serde_json::json!({
        "train_seconds": report.elapsed_ms.last().copied().unwrap_or(0.0) / 1e3,
        "batch_time_ms": report.batch_time_ms,
    });
    fs::write(a.out.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
    let mut f = create(&a.out.join("checkpoint.json"))?;
    save_checkpoint(&net, &mut f)?;
    f.flush()?;

    println!(
        "{} {} L={} H={} params={}: accuracy {:.4} ± {:.4} over {} instances",
        cfg.model.arch,
        cfg.task,
        cfg.model.layers,
        cfg.model.hidden,
        report.n_params,
        report.accuracy_mean,
        report.accuracy_std,
        report.eval_accuracies.len()
    );
    if let Some(ms) = report.batch_time_ms {
        println!("batch time {ms:.1} ms");
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let spec = ExperimentSpec::from_path(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let opts = RunOptions {
        workers: a.workers.or_else(workers_from_env),
        verbose: !a.quiet,
    };
    let results = run_experiment(&spec, &a.out, opts)?;
    for c in &results.cells {
        match &c.error {
            Some(e) => println!("{} {}: {e}", c.architecture, c.sweep_value),
            None => println!(
                "{} {}: {:.4} ± {:.4} ({} trials, {} failed)",
                c.architecture,
                c.sweep_value,
                c.accuracy_mean,
                c.accuracy_std,
                c.trials.len(),
                c.failed_trials
            ),
        }
    }
    Ok(())
}

fn dirichlet(a: &DirichletArgs) -> Result<()> {
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    if a.input.is_empty() {
        let s = run_dirichlet_baseline(a.instances, a.q, a.seed, Execution::default())?;
        for w in &s.warnings {
            eprintln!("warning: {w}");
        }
        writeln!(out, "# graphnet dirichlet v1")?;
        writeln!(out, "instance,accuracy")?;
        for (k, acc) in s.accuracies.iter().enumerate() {
            writeln!(out, "{k},{acc}")?;
        }
        out.flush()?;
        eprintln!(
            "q={} mean accuracy {:.4} ± {:.4} over {} instances ({} unseeded nodes)",
            s.q_noise,
            s.accuracy_mean,
            s.accuracy_std,
            s.accuracies.len(),
            s.unseeded_nodes
        );
        return Ok(());
    }
    writeln!(out, "# graphnet dirichlet-assignment v1")?;
    writeln!(out, "file,node,label,target,unseeded")?;
    for path in &a.input {
        let inst = read_instance(BufReader::new(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
        ))?;
        if inst.task != Task::Clustering {
            bail!("{} is not a clustering instance", path.display());
        }
        let (res, acc) = solve_instance(&inst, Execution::default())?;
        for (i, (&label, &target)) in res.labels.iter().zip(&inst.targets).enumerate() {
            let unseeded = u8::from(res.unseeded.binary_search(&i).is_ok());
            writeln!(out, "{},{i},{label},{target},{unseeded}", path.display())?;
        }
        eprintln!("{}: accuracy {acc:.4}", path.display());
    }
    out.flush()?;
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let results = run_suite(a.seed)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&results)?);
    } else {
        for r in &results {
            println!(
                "{:<24} n={:<3} checked={:<5} max_rel_err={:.3e} {}",
                r.name,
                r.n_nodes,
                r.n_checked,
                r.max_rel_err,
                if r.passed { "ok" } else { "FAIL" }
            );
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        eprintln!("{failed} check(s) above tolerance {TOLERANCE:e}");
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Dirichlet(a) => dirichlet(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if std::env::var_os(WORKERS_ENV).is_some() && workers_from_env().is_none() {
                eprintln!("note: {WORKERS_ENV} must be a positive integer");
            }
            ExitCode::FAILURE
        }
    }
}
