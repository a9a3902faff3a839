use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{linear_names, residual_wrap, LayerParams, Linear, Norm};
use super::{ModelConfig, ModelError};
use crate::tensor::{Bindings, ParamId, ParamStore, SparseAdjacency, Tape, Tensor, Var};

/// Weight of the newest batch in the running batch-norm averages.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    fn new(width: usize) -> Self {
        RunningStats {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm uses the statistics of the current graph. Used for training
    /// and, since every graph is a batch of its own nodes, for inference too.
    GraphStats,
    /// Batch norm uses the running statistics accumulated during training.
    RunningStats,
}

#[derive(Clone, Copy, Debug)]
struct LinearIds {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct NormIds {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct LayerIds {
    linears: Vec<LinearIds>,
    norm: Option<NormIds>,
}

/// Embedding, `L` stacked layers and a linear readout, with the parameter
/// store that owns their weights.
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    params: ParamStore,
    embed: LinearIds,
    layers: Vec<LayerIds>,
    readout: LinearIds,
    running: Vec<RunningStats>,
}

/// Result of one forward pass.
pub struct Forward {
    pub logits: Var,
    /// Output of the last layer.
    pub hidden: Var,
    /// Output of the input embedding.
    pub embedded: Var,
    pub bindings: Bindings,
    layers: Vec<LayerParams>,
}

fn add_linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> LinearIds {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-bound..=bound)).collect() };
    let w = Tensor::from_vec(fan_in, fan_out, draw(fan_in * fan_out)).expect("shape");
    let b = Tensor::from_vec(1, fan_out, draw(fan_out)).expect("shape");
    LinearIds {
        weight: store.add(format!("{name}.weight"), w),
        bias: store.add(format!("{name}.bias"), b),
    }
}

impl Network {
    /// Builds a network with weights uniform in `±1/√fan_in`, batch-norm
    /// scale 1 and shift 0.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = config.hidden;
        let embed = add_linear(&mut params, &mut rng, "embed", config.input_dim, h);
        let mut layers = Vec::with_capacity(config.layers);
        let mut running = Vec::new();
        for l in 0..config.layers {
            let linears = linear_names(config.arch)
                .iter()
                .map(|n| add_linear(&mut params, &mut rng, &format!("layer{l}.{n}"), h, h))
                .collect();
            let norm = config.batch_norm.then(|| {
                running.push(RunningStats::new(h));
                NormIds {
                    gamma: params.add(format!("layer{l}.norm.gamma"), Tensor::filled(1, h, 1.0)),
                    beta: params.add(format!("layer{l}.norm.beta"), Tensor::zeros(1, h)),
                }
            });
            layers.push(LayerIds { linears, norm });
        }
        let readout = add_linear(&mut params, &mut rng, "readout", h, config.n_classes);
        Ok(Network {
            config,
            params,
            embed,
            layers,
            readout,
            running,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Running batch-norm statistics, one entry per normalized layer.
    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub(crate) fn set_running_stats(&mut self, running: Vec<RunningStats>) -> Result<(), ModelError> {
        if running.len() != self.running.len()
            || running
                .iter()
                .any(|r| r.mean.len() != self.config.hidden || r.var.len() != self.config.hidden)
        {
            return Err(ModelError::Checkpoint("running statistics do not match config".into()));
        }
        self.running = running;
        Ok(())
    }

    fn bind_linear(&self, tape: &mut Tape<'_>, b: &mut Bindings, ids: LinearIds) -> Linear {
        Linear {
            weight: self.params.bind(tape, b, ids.weight),
            bias: self.params.bind(tape, b, ids.bias),
        }
    }

    /// Records the whole network on `tape` for features `x` of shape
    /// `n × input_dim`.
    pub fn forward<'g>(
        &self,
        tape: &mut Tape<'g>,
        x: &Tensor,
        adj: &'g SparseAdjacency,
        mode: Mode,
    ) -> Result<Forward, ModelError> {
        if x.cols() != self.config.input_dim || x.rows() != adj.n_nodes() {
            return Err(ModelError::Contract(format!(
                "features {:?} for a graph of {} nodes and input_dim {}",
                x.shape(),
                adj.n_nodes(),
                self.config.input_dim
            )));
        }
        let mut bindings = Bindings::new();
        let xv = tape.constant(x.clone());
        let embed = self.bind_linear(tape, &mut bindings, self.embed);
        let embedded = embed.apply(tape, xv)?;

        let mut h = embedded;
        let mut bound_layers = Vec::with_capacity(self.layers.len());
        let mut norm_slot = 0;
        for ids in &self.layers {
            let lin: Vec<Linear> = ids
                .linears
                .iter()
                .map(|&l| self.bind_linear(tape, &mut bindings, l))
                .collect();
            let norm = ids.norm.map(|n| {
                let gamma = self.params.bind(tape, &mut bindings, n.gamma);
                let beta = self.params.bind(tape, &mut bindings, n.beta);
                let norm = match mode {
                    Mode::GraphStats => Norm::train(gamma, beta),
                    Mode::RunningStats => {
                        let r = &self.running[norm_slot];
                        Norm::eval(gamma, beta, r.mean.clone(), r.var.clone())
                    }
                };
                norm_slot += 1;
                norm
            });
            let mut layer = LayerParams::assemble(self.config.arch, &lin, norm);
            let out = layer.apply(tape, h, adj, self.config.inner_steps)?;
            h = if self.config.residual {
                residual_wrap(tape, out, h)?
            } else {
                out
            };
            bound_layers.push(layer);
        }
        let readout = self.bind_linear(tape, &mut bindings, self.readout);
        let logits = readout.apply(tape, h)?;
        Ok(Forward {
            logits,
            hidden: h,
            embedded,
            bindings,
            layers: bound_layers,
        })
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running averages, once per normalization applied.
    pub fn absorb_batch_stats(&mut self, tape: &Tape<'_>, fwd: &Forward) {
        let mut slot = 0;
        for layer in &fwd.layers {
            let Some(norm) = layer.norm() else { continue };
            let running = &mut self.running[slot];
            for &v in &norm.applied {
                if let Some(stats) = tape.batch_stats(v) {
                    let unbias = stats.n as f64 / (stats.n as f64 - 1.0);
                    for k in 0..running.mean.len() {
                        running.mean[k] = (1.0 - BN_MOMENTUM) * running.mean[k] + BN_MOMENTUM * stats.mean[k];
                        running.var[k] = (1.0 - BN_MOMENTUM) * running.var[k] + BN_MOMENTUM * stats.var[k] * unbias;
                    }
                }
            }
            slot += 1;
        }
    }

    /// Logits with batch norm over the graph's own nodes.
    pub fn predict(&self, x: &Tensor, adj: &SparseAdjacency) -> Result<Tensor, ModelError> {
        self.predict_with(x, adj, Mode::GraphStats)
    }

    pub fn predict_with(&self, x: &Tensor, adj: &SparseAdjacency, mode: Mode) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, x, adj, mode)?;
        Ok(tape.value(fwd.logits).clone())
    }
}
