//! Graph RNN and graph ConvNet architectures behind one layer interface.
//!
//! Every architecture maps node features of width `H` and a graph structure
//! to new node features of width `H`. An input embedding lifts the raw
//! features to width `H` and a linear readout maps the last hidden state to
//! class logits, so layers can be stacked with identity skips.

mod budget;
mod checkpoint;
mod layers;
mod network;

pub use budget::{count_params, solve_hidden_for_budget};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layers::{
    commnet_layer, edge_gates, gated_gcn_layer, gated_gcn_layer_with_gates, ggru_layer, glstm_layer, gvrnn_layer,
    residual_wrap, sgcn_layer, CommNetParams, GatedGcnParams, GgruParams, GlstmParams, GvrnnParams, LayerParams,
    Linear, Norm, SgcnParams,
};
pub use network::{Forward, Mode, Network, RunningStats, BN_MOMENTUM};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("budget {budget} cannot fit H = 1 ({minimum} parameters needed)")]
    Infeasible { budget: usize, minimum: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Vanilla graph RNN with an MLP message and fixed-point iterations.
    Gvrnn,
    /// Gated graph neural network (GRU cell over neighbor sums).
    Ggru,
    /// Graph LSTM with per-edge forget gates.
    Glstm,
    /// Vanilla graph ConvNet.
    CommNet,
    /// Edge-gated ConvNet without a center-vertex term.
    Sgcn,
    /// Edge-gated ConvNet with a center-vertex term.
    GatedGcn,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Gvrnn,
        Arch::Ggru,
        Arch::Glstm,
        Arch::CommNet,
        Arch::Sgcn,
        Arch::GatedGcn,
    ];

    /// Uses inner iterations `T`.
    pub fn is_recurrent(self) -> bool {
        matches!(self, Arch::Gvrnn | Arch::Ggru | Arch::Glstm)
    }

    /// Number of `H × H` linear maps (each with a bias) in one layer.
    pub fn linear_maps(self) -> usize {
        match self {
            Arch::Gvrnn => 4,
            Arch::Ggru => 6,
            Arch::Glstm => 8,
            Arch::CommNet => 2,
            Arch::Sgcn => 3,
            Arch::GatedGcn => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gvrnn => "gvrnn",
            Arch::Ggru => "ggru",
            Arch::Glstm => "glstm",
            Arch::CommNet => "commnet",
            Arch::Sgcn => "sgcn",
            Arch::GatedGcn => "gatedgcn",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown architecture '{s}'"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub layers: usize,
    pub hidden: usize,
    /// Inner iterations per layer; ignored by ConvNets.
    pub inner_steps: usize,
    pub residual: bool,
    pub batch_norm: bool,
    pub input_dim: usize,
    pub n_classes: usize,
}

impl ModelConfig {
    pub fn new(arch: Arch, layers: usize, hidden: usize, input_dim: usize, n_classes: usize) -> Self {
        ModelConfig {
            arch,
            layers,
            hidden,
            inner_steps: 3,
            residual: true,
            batch_norm: true,
            input_dim,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.layers == 0 {
            return bad("layers must be >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden width must be >= 1");
        }
        if self.arch.is_recurrent() && self.inner_steps == 0 {
            return bad("recurrent architectures need inner_steps >= 1");
        }
        if self.input_dim == 0 || self.n_classes == 0 {
            return bad("input_dim and n_classes must be >= 1");
        }
        Ok(())
    }
}
