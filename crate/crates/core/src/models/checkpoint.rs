//! Self-describing JSON checkpoints: config, named parameter tensors and
//! running batch-norm statistics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, Network, RunningStats};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub params: Vec<NamedTensor>,
    pub running: Vec<RunningStats>,
}

const FORMAT: &str = "graphnet-checkpoint-v1";

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        let store = net.params();
        Checkpoint {
            format: FORMAT.to_string(),
            config: net.config().clone(),
            params: store
                .ids()
                .map(|id| NamedTensor {
                    name: store.name(id).to_string(),
                    tensor: store.value(id).clone(),
                })
                .collect(),
            running: net.running_stats().to_vec(),
        }
    }

    pub fn into_network(self) -> Result<Network, ModelError> {
        if self.format != FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format '{}'", self.format)));
        }
        let mut net = Network::new(self.config, 0)?;
        if self.params.len() != net.params().len() {
            return Err(ModelError::Checkpoint(format!(
                "{} tensors stored, config needs {}",
                self.params.len(),
                net.params().len()
            )));
        }
        for nt in self.params {
            let store = net.params_mut();
            let id = store
                .id(&nt.name)
                .ok_or_else(|| ModelError::Checkpoint(format!("unexpected parameter {}", nt.name)))?;
            if store.value(id).shape() != nt.tensor.shape() {
                return Err(ModelError::Checkpoint(format!("shape mismatch for {}", nt.name)));
            }
            *store.value_mut(id) = nt.tensor;
        }
        net.set_running_stats(self.running)?;
        Ok(net)
    }
}

pub fn save_checkpoint(net: &Network, out: impl Write) -> Result<(), ModelError> {
    serde_json::to_writer(out, &Checkpoint::from_network(net)).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(input: impl Read) -> Result<Network, ModelError> {
    let ckpt: Checkpoint = serde_json::from_reader(input).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    ckpt.into_network()
}
