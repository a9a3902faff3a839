//! Graph RNN and graph ConvNet architectures for variable-size graphs,
//! benchmarked on stochastic-block-model subgraph matching and
//! semi-supervised clustering.

pub mod exec;
pub mod experiment;
pub mod gradcheck;
pub mod graph;
pub mod models;
pub mod tensor;
pub mod training;
pub mod variational;
