//! Stochastic-block-model task instances: subgraph matching and
//! semi-supervised clustering.

mod io;
mod sbm;
mod tasks;

pub use io::{read_instance, write_instance};
pub use sbm::{sbm_generate, validate_sbm_stats, SbmParams, SbmReport, Z_FLAG};
pub use tasks::{
    make_clustering_instance, make_matching_instance, make_pattern, InstanceSource, TaskInstance, CLUSTERING_COMMUNITIES,
    CLUSTERING_SIZE_RANGE, HOST_COMMUNITIES, HOST_SIZE_RANGE, PATTERN_NODES, SBM_P, SIGNAL_VOCAB,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{SparseAdjacency, TensorError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need at least {need} graphs, got {got}")]
    InsufficientData { got: usize, need: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Structure(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Matching,
    Clustering,
}

impl Task {
    /// Number of output classes.
    pub fn n_classes(self) -> usize {
        match self {
            Task::Matching => 2,
            Task::Clustering => CLUSTERING_COMMUNITIES,
        }
    }

    /// Width of the per-node input features.
    pub fn input_dim(self) -> usize {
        match self {
            Task::Matching => SIGNAL_VOCAB,
            Task::Clustering => CLUSTERING_COMMUNITIES + 1,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Matching => "matching",
            Task::Clustering => "clustering",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matching" => Ok(Task::Matching),
            "clustering" => Ok(Task::Clustering),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// Simple undirected graph with per-node signal and community labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub adjacency: SparseAdjacency,
    /// Symbol in `0..SIGNAL_VOCAB` per node.
    pub signal: Vec<u8>,
    pub community: Vec<usize>,
    pub n_communities: usize,
}

impl Graph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.n_edges() / 2
    }

    /// Checks simplicity, symmetry and label ranges.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.n_nodes();
        if self.signal.len() != n || self.community.len() != n {
            return Err(GraphError::InvalidParams("label vectors do not match node count".into()));
        }
        if self.signal.iter().any(|&s| s as usize >= SIGNAL_VOCAB) {
            return Err(GraphError::InvalidParams("signal outside vocabulary".into()));
        }
        if self.community.iter().any(|&c| c >= self.n_communities) {
            return Err(GraphError::InvalidParams("community id out of range".into()));
        }
        let adj = &self.adjacency;
        if adj.sources().iter().zip(adj.targets()).any(|(s, t)| s == t) {
            return Err(GraphError::InvalidParams("self-loop".into()));
        }
        if !adj.is_symmetric() {
            return Err(GraphError::InvalidParams("asymmetric adjacency".into()));
        }
        Ok(())
    }
}
