//! Acceptance criteria 1-10, one verdict line each.
//!
//! Criteria 5-7 train 45 networks for 5000 iterations each. Their trials
//! persist under `results/acceptance/` (or `$GRAPHNET_ACCEPTANCE_DIR`) and
//! are resumed rather than recomputed. Set `GRAPHNET_ACCEPTANCE_STRICT=1` to
//! turn a failed criterion into a nonzero exit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use graphnet::exec::{derive_seed, workers_from_env, Execution};
use graphnet::experiment::{run_dirichlet_baseline, run_experiment, ExperimentResults, ExperimentSpec, RunOptions};
use graphnet::gradcheck::{random_graph, run_suite, TOLERANCE};
use graphnet::graph::{sbm_generate, InstanceSource, SbmParams, Task};
use graphnet::models::*;
use graphnet::tensor::{Tape, Tensor};
use graphnet::training::{measure_batch_time, train};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const SEED: u64 = 2017;
const NOISE_BAND: f64 = 0.02;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    let mut n = 0;
    for seed in 0..3 {
        for r in run_suite(seed).unwrap() {
            worst = worst.max(r.max_rel_err);
            n += 1;
            if !r.passed {
                failed.push(format!("{} (seed {seed})", r.name));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failed.is_empty() && secs < 60.0,
        format!("{n} checks, max rel err {worst:.2e} (< {TOLERANCE:e}), {secs:.1} s (< 60 s), failures {failed:?}"),
    )
}

fn dense_product(a: &[Vec<f64>], h: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.len(), h.cols());
    for i in 0..a.len() {
        for k in 0..h.cols() {
            let mut acc = 0.0;
            for (j, row) in a[i].iter().enumerate() {
                acc += row * h.get(j, k);
            }
            out.set(i, k, acc);
        }
    }
    out
}

fn linear(tape: &mut Tape<'_>, rng: &mut ChaCha8Rng, h: usize) -> Linear {
    Linear {
        weight: tape.constant(random_tensor(rng, h, h)),
        bias: tape.constant(random_tensor(rng, 1, h)),
    }
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut sparse_ok = 0;
    let mut gate_ok = 0;
    for _ in 0..200 {
        let k = rng.gen_range(1..=4);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=20 / k)).collect();
        let g = sbm_generate(
            &SbmParams {
                p: rng.gen_range(0.2..0.9),
                q: rng.gen_range(0.0..0.2),
                community_sizes: sizes,
            },
            rng.gen(),
        )
        .unwrap();
        let adj = &g.adjacency;
        let n = adj.n_nodes();
        let hdim = 4;
        let hv = random_tensor(&mut rng, n, hdim);
        let mut tape = Tape::new();
        let h = tape.constant(hv.clone());
        let s = tape.neighbor_sum(h, adj).unwrap();
        sparse_ok += usize::from(tape.value(s) == &dense_product(&adj.to_dense(), &hv));

        let (u, v, a, b) = (
            linear(&mut tape, &mut rng, hdim),
            linear(&mut tape, &mut rng, hdim),
            linear(&mut tape, &mut rng, hdim),
            linear(&mut tape, &mut rng, hdim),
        );
        let mut gp = GatedGcnParams { u, v, a, b, norm: None };
        let mut cp = CommNetParams { u, v, norm: None };
        let ones = tape.constant(Tensor::filled(adj.n_edges(), hdim, 1.0));
        let gated = gated_gcn_layer_with_gates(&mut tape, h, adj, &mut gp, ones).unwrap();
        let comm = commnet_layer(&mut tape, h, adj, &mut cp).unwrap();
        gate_ok += usize::from(tape.value(gated) == tape.value(comm));
    }
    verdict(
        sparse_ok == 200 && gate_ok == 200,
        format!("sparse == dense on {sparse_ok}/200 SBM graphs, unit-gate GatedGCN == CommNet on {gate_ok}/200 (bitwise)"),
    )
}

fn permutation_equivariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for arch in Arch::ALL {
        for _ in 0..20 {
            let n = rng.gen_range(2..=15);
            let adj = random_graph(&mut rng, n, 0.3);
            let x = random_tensor(&mut rng, n, 3);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let net = Network::new(ModelConfig::new(arch, 3, 6, 3, 2), rng.gen()).unwrap();
            let want = net.predict(&x, &adj).unwrap().permute_rows(&perm);
            let got = net.predict(&x.permute_rows(&perm), &adj.permuted(&perm)).unwrap();
            worst = worst.max(got.max_abs_diff(&want));
            cases += 1;
        }
    }
    verdict(
        worst <= 1e-10,
        format!("{cases} cases over 6 architectures, max |Δ| {worst:.1e} (<= 1e-10)"),
    )
}

fn dirichlet_baseline() -> Verdict {
    let start = Instant::now();
    let s = run_dirichlet_baseline(100, 0.1, SEED, Execution::default()).unwrap();
    let m = s.accuracy_mean;
    verdict(
        (0.40..=0.51).contains(&m) && s.accuracies.len() == 100,
        format!(
            "mean accuracy {:.2}% ± {:.2} over {} instances (band [40%, 51%], reference 45.37%), {:.1} s",
            100.0 * m,
            100.0 * s.accuracy_std,
            s.accuracies.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn experiment(name: &str) -> ExperimentResults {
    let spec = ExperimentSpec::from_path(&workspace().join(format!("configs/acceptance/{name}.toml"))).unwrap();
    let root = std::env::var_os("GRAPHNET_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join("results/acceptance"));
    let opts = RunOptions {
        workers: workers_from_env(),
        verbose: true,
    };
    run_experiment(&spec, &root.join(name), opts).unwrap()
}

fn mean_at(r: &ExperimentResults, arch: Arch, value: f64) -> f64 {
    let c = r.cell(arch, value).unwrap();
    assert!(c.error.is_none(), "{arch} {value}: {:?}", c.error);
    c.accuracy_mean
}

fn trials_line(r: &ExperimentResults, arch: Arch, value: f64) -> String {
    let c = r.cell(arch, value).unwrap();
    let accs: Vec<String> = c
        .trials
        .iter()
        .map(|t| t.accuracy.map_or("failed".into(), |a| format!("{:.1}", 100.0 * a)))
        .collect();
    format!("[{}]", accs.join(", "))
}

fn learning_beats_variational(res: &ExperimentResults) -> Verdict {
    let c = res.cell(Arch::GatedGcn, 6.0).unwrap();
    let m = c.accuracy_mean;
    verdict(
        m >= 0.70 && c.trials.len() == 5 && c.failed_trials == 0,
        format!(
            "residual GatedGCN L=6 H={} ({} params) clustering: {:.2}% ± {:.2} over {} trials {} (>= 70%)",
            c.hidden.unwrap_or(0),
            c.n_params.unwrap_or(0),
            100.0 * m,
            100.0 * c.accuracy_std,
            c.trials.len(),
            trials_line(res, Arch::GatedGcn, 6.0)
        ),
    )
}

fn residuality(res: &ExperimentResults, plain: &ExperimentResults) -> Verdict {
    let (r, p) = (mean_at(res, Arch::GatedGcn, 6.0), mean_at(plain, Arch::GatedGcn, 6.0));
    verdict(
        r - p >= 0.05,
        format!(
            "residual {:.2}% vs plain {:.2}% {}: gap {:+.2} points (>= +5)",
            100.0 * r,
            100.0 * p,
            trials_line(plain, Arch::GatedGcn, 6.0),
            100.0 * (r - p)
        ),
    )
}

fn depth_trend(clustering: &ExperimentResults, matching: &ExperimentResults, glstm: &ExperimentResults) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (task, r) in [("clustering", clustering), ("matching", matching)] {
        let accs: Vec<f64> = [1.0, 2.0, 4.0, 6.0].iter().map(|&l| mean_at(r, Arch::GatedGcn, l)).collect();
        let monotone = accs.windows(2).all(|w| w[1] >= w[0] - NOISE_BAND);
        ok &= monotone;
        let shown: Vec<String> = accs.iter().map(|a| format!("{:.1}", 100.0 * a)).collect();
        parts.push(format!(
            "GatedGCN {task} L=1,2,4,6: {} ({})",
            shown.join(" / "),
            if monotone { "non-decreasing" } else { "DECREASES" }
        ));
    }
    let (g6, g10) = (mean_at(glstm, Arch::Glstm, 6.0), mean_at(glstm, Arch::Glstm, 10.0));
    let glstm_ok = g10 <= g6 + NOISE_BAND;
    ok &= glstm_ok;
    parts.push(format!(
        "GLSTM matching L=6 {:.1} vs L=10 {:.1} {}",
        100.0 * g6,
        100.0 * g10,
        trials_line(glstm, Arch::Glstm, 10.0)
    ));
    verdict(ok, format!("{} (band {} points)", parts.join("; "), 100.0 * NOISE_BAND))
}

fn speed_ratio() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for task in [Task::Matching, Task::Clustering] {
        let source = InstanceSource::new(task, 0.1, derive_seed(SEED, &[0])).unwrap();
        let mut times = Vec::new();
        for arch in [Arch::GatedGcn, Arch::Glstm] {
            let mut m = ModelConfig::new(arch, 6, 1, task.input_dim(), task.n_classes());
            m.inner_steps = 3;
            m.hidden = solve_hidden_for_budget(&m, 100_000).unwrap();
            let net = Network::new(m.clone(), SEED).unwrap();
            times.push((m.hidden, measure_batch_time(&net, &source, SEED).unwrap()));
        }
        let ratio = times[1].1 / times[0].1;
        ok &= ratio >= 1.3;
        parts.push(format!(
            "{task}: GatedGCN H={} {:.0} ms, GLSTM H={} {:.0} ms, ratio {ratio:.2}",
            times[0].0, times[0].1, times[1].0, times[1].1
        ));
    }
    verdict(ok, format!("{} (>= 1.3)", parts.join("; ")))
}

fn budget_solver() -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    for task in [Task::Matching, Task::Clustering] {
        for arch in Arch::ALL {
            for layers in [1, 6] {
                for b in [25_000, 50_000, 75_000, 100_000, 150_000] {
                    let mut m = ModelConfig::new(arch, layers, 1, task.input_dim(), task.n_classes());
                    m.hidden = solve_hidden_for_budget(&m, b).unwrap();
                    let at = count_params(&m);
                    let next = count_params(&ModelConfig {
                        hidden: m.hidden + 1,
                        ..m.clone()
                    });
                    let instantiated = Network::new(m.clone(), 0).unwrap().params().n_scalars();
                    checked += 1;
                    if !(at <= b && b < next && instantiated == at) {
                        bad.push(format!("{arch} {task} L={layers} B={b}"));
                    }
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!("{checked} (arch, task, L, B) cases satisfy count(H) <= B < count(H+1); violations {bad:?}"),
    )
}

fn determinism() -> Verdict {
    let task = Task::Clustering;
    let mut m = ModelConfig::new(Arch::GatedGcn, 2, 8, task.input_dim(), task.n_classes());
    m.residual = true;
    let mut cfg = graphnet::training::TrainConfig::new(m, task, 0.1, SEED);
    cfg.iterations = 60;
    cfg.eval_instances = 5;
    cfg.curve_points = vec![0, 30, 60];
    let csv = |exec| {
        let r = train(&cfg, exec).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        r.write_curve_csv(&mut buf).unwrap();
        buf.extend(serde_json::to_vec(&r.summary_json()).unwrap());
        buf
    };
    let train_same = csv(Execution::Sequential) == csv(Execution::Parallel);

    let spec = ExperimentSpec::from_toml_str(
        r#"
        name = "determinism"
        task = "matching"
        sweep = "noise"
        values = [0.1, 0.35]
        architectures = ["glstm", "gatedgcn"]
        trials = 2
        master_seed = 2017
        [fixed]
        layers = 2
        hidden = 6
        iterations = 20
        eval_instances = 3
        "#,
    )
    .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (k, d) in dirs.iter().enumerate() {
        let opts = RunOptions {
            workers: Some(k + 1),
            verbose: false,
        };
        run_experiment(&spec, d.path(), opts).unwrap();
    }
    let files = ["results.csv", "summary.json"];
    let sweep_same = files
        .iter()
        .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap());
    verdict(
        train_same && sweep_same,
        format!("train CSV+summary identical: {train_same}; sweep {files:?} identical across 1 and 2 workers: {sweep_same}"),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        println!(
            "criterion {n:>2} [{}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((n, name, v));
    };
    record(1, "gradient suite", gradient_suite());
    record(2, "oracle equivalence", oracle_equivalence());
    record(3, "permutation equivariance", permutation_equivariance());
    record(4, "dirichlet baseline", dirichlet_baseline());

    let res = experiment("gatedgcn-clustering-residual");
    let plain = experiment("gatedgcn-clustering-plain");
    record(5, "learning beats variational", learning_beats_variational(&res));
    record(6, "residuality ablation", residuality(&res, &plain));
    let dc = experiment("depth-clustering");
    let dm = experiment("depth-matching");
    let gl = experiment("glstm-depth-matching");
    record(7, "depth trend", depth_trend(&dc, &dm, &gl));
    record(8, "speed ratio", speed_ratio());
    record(9, "budget solver", budget_solver());
    record(10, "determinism", determinism());

    let passed = verdicts.iter().filter(|(_, _, v)| v.pass).count();
    println!("acceptance: {passed}/{} criteria met", verdicts.len());
    let strict = std::env::var("GRAPHNET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < verdicts.len() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
