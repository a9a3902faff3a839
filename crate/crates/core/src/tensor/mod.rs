//! Dense tensors, sparse graph structure and a recording tape for
//! reverse-mode differentiation.

mod adjacency;
mod dense;
mod params;
mod tape;

pub use adjacency::SparseAdjacency;
pub use dense::Tensor;
pub use params::{Bindings, ParamId, ParamStore};
pub use tape::{sigmoid, Activation, BatchStats, Tape, Var, BN_EPS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("batch norm needs at least 2 rows in training mode, got {n}")]
    DegenerateBatch { n: usize },
    #[error("loss has no contributing rows")]
    EmptyLoss,
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: [usize; 2] },
    #[error("contract violation: {0}")]
    Contract(String),
}
