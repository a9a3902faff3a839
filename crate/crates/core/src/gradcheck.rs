//! Finite-difference gradient checks for every architecture and the loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::models::{Arch, Mode, ModelConfig, ModelError, Network};
use crate::tensor::{SparseAdjacency, Tape, Tensor};

/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub n_nodes: usize,
    pub n_checked: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// `|a − b| / max(|a|, |b|, 1e-3)`; the floor keeps near-zero gradients
/// from dominating.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

/// Erdős–Rényi graph on `n` nodes.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> SparseAdjacency {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    SparseAdjacency::from_undirected(n, &pairs).expect("simple graph")
}

fn network_loss(
    net: &Network,
    x: &Tensor,
    adj: &SparseAdjacency,
    targets: &[usize],
    weights: &[f64],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, x, adj, Mode::GraphStats)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, targets, weights, None)?;
    Ok(tape.value(loss).item().expect("scalar"))
}

/// Checks the gradient of the training loss with respect to every scalar
/// parameter of `net`.
pub fn check_network(
    net: &mut Network,
    x: &Tensor,
    adj: &SparseAdjacency,
    targets: &[usize],
    weights: &[f64],
) -> Result<(usize, f64), ModelError> {
    let mut tape = Tape::new();
    let fwd = net.forward(&mut tape, x, adj, Mode::GraphStats)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, targets, weights, None)?;
    tape.backward(loss)?;
    net.params_mut().zero_grads();
    net.params_mut().collect_grads(&tape, &fwd.bindings);
    drop(tape);

    let ids: Vec<_> = net.params().ids().collect();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for id in ids {
        let analytic = net.params().grad(id).clone();
        for k in 0..analytic.len() {
            let orig = net.params().value(id).data()[k];
            net.params_mut().value_mut(id).data_mut()[k] = orig + STEP;
            let plus = network_loss(net, x, adj, targets, weights)?;
            net.params_mut().value_mut(id).data_mut()[k] = orig - STEP;
            let minus = network_loss(net, x, adj, targets, weights)?;
            net.params_mut().value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[k], numeric));
            n += 1;
        }
    }
    Ok((n, worst))
}

/// Weighted, masked cross-entropy checked against its logits.
pub fn check_loss(rng: &mut ChaCha8Rng) -> Result<CheckResult, ModelError> {
    let n = rng.gen_range(5..=15);
    let c = 4;
    let logits = random_tensor(rng, n, c);
    let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
    let weights: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..2.0)).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 3 != 1).collect();
    let eval = |l: &Tensor| -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let v = tape.constant(l.clone());
        let loss = tape.softmax_cross_entropy(v, &targets, &weights, Some(&mask))?;
        Ok(tape.value(loss).item().expect("scalar"))
    };
    let mut tape = Tape::new();
    let v = tape.param(logits.clone());
    let loss = tape.softmax_cross_entropy(v, &targets, &weights, Some(&mask))?;
    tape.backward(loss)?;
    let analytic = tape.grad(v).expect("param").clone();
    let mut worst: f64 = 0.0;
    for k in 0..logits.len() {
        let mut plus = logits.clone();
        plus.data_mut()[k] += STEP;
        let mut minus = logits.clone();
        minus.data_mut()[k] -= STEP;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * STEP);
        worst = worst.max(rel_err(analytic.data()[k], numeric));
    }
    Ok(CheckResult {
        name: "weighted_cross_entropy".into(),
        n_nodes: n,
        n_checked: logits.len(),
        max_rel_err: worst,
        passed: worst < TOLERANCE,
    })
}

/// Runs the full suite: every architecture with and without batch norm and
/// residuality, each on its own random graph of 5 to 15 nodes, plus the
/// loss.
pub fn run_suite(seed: u64) -> Result<Vec<CheckResult>, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for arch in Arch::ALL {
        for (bn, residual) in [(true, true), (false, false)] {
            let n = rng.gen_range(5..=15);
            let adj = random_graph(&mut rng, n, 0.35);
            let mut cfg = ModelConfig::new(arch, 2, 3, 3, 2);
            cfg.batch_norm = bn;
            cfg.residual = residual;
            cfg.inner_steps = 2;
            let mut net = Network::new(cfg, rng.gen())?;
            let x = random_tensor(&mut rng, n, 3);
            let targets: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let (n_checked, worst) = check_network(&mut net, &x, &adj, &targets, &[0.7, 1.3])?;
            out.push(CheckResult {
                name: format!(
                    "{arch}{}{}",
                    if bn { "+bn" } else { "" },
                    if residual { "+res" } else { "" }
                ),
                n_nodes: n,
                n_checked,
                max_rel_err: worst,
                passed: worst < TOLERANCE,
            });
        }
    }
    out.push(check_loss(&mut rng)?);
    Ok(out)
}
