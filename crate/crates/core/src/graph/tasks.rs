use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sbm::{block_labels, sample_pairs};
use super::{Graph, GraphError, Task};
use crate::tensor::{SparseAdjacency, Tensor};

/// Size of the node signal alphabet.
pub const SIGNAL_VOCAB: usize = 3;
/// Intra-community edge probability for all generated graphs.
pub const SBM_P: f64 = 0.5;
pub const PATTERN_NODES: usize = 20;
/// Internal edge probability of the matching pattern.
pub const PATTERN_P: f64 = 0.5;
pub const HOST_COMMUNITIES: usize = 10;
pub const HOST_SIZE_RANGE: RangeInclusive<usize> = 15..=25;
pub const CLUSTERING_COMMUNITIES: usize = 10;
pub const CLUSTERING_SIZE_RANGE: RangeInclusive<usize> = 5..=25;

/// A generated graph with its node supervision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskInstance {
    pub graph: Graph,
    pub task: Task,
    /// Class per node: pattern membership (matching) or community (clustering).
    pub targets: Vec<usize>,
    /// One seeded node per community for clustering; all false for matching.
    pub seed_mask: Vec<bool>,
}

impl TaskInstance {
    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    /// Node input features.
    ///
    /// Matching: one-hot of the signal symbol. Clustering: one-hot of the
    /// community id on seeded nodes, and the last column set on every
    /// unlabeled node.
    pub fn features(&self) -> Tensor {
        let n = self.n_nodes();
        let dim = self.task.input_dim();
        let mut x = Tensor::zeros(n, dim);
        for i in 0..n {
            let col = match self.task {
                Task::Matching => self.graph.signal[i] as usize,
                Task::Clustering if self.seed_mask[i] => self.targets[i],
                Task::Clustering => dim - 1,
            };
            x.set(i, col, 1.0);
        }
        x
    }

    /// Seeded nodes with their labels.
    pub fn seeds(&self) -> Vec<(usize, usize)> {
        (0..self.n_nodes())
            .filter(|&i| self.seed_mask[i])
            .map(|i| (i, self.targets[i]))
            .collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        self.graph.validate()?;
        let n = self.n_nodes();
        if self.targets.len() != n || self.seed_mask.len() != n {
            return Err(GraphError::InvalidParams("supervision length mismatch".into()));
        }
        if self.targets.iter().any(|&t| t >= self.task.n_classes()) {
            return Err(GraphError::InvalidParams("target class out of range".into()));
        }
        if self.task == Task::Clustering {
            let mut seeded = vec![0usize; self.graph.n_communities];
            for (i, _) in self.seeds() {
                seeded[self.graph.community[i]] += 1;
            }
            if seeded.iter().any(|&c| c != 1) {
                return Err(GraphError::InvalidParams("each community needs exactly one seed".into()));
            }
        }
        Ok(())
    }
}

fn check_noise(q: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(GraphError::InvalidParams(format!("noise q={q} outside [0, 1]")))
    }
}

fn random_signal(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(0..SIGNAL_VOCAB as u8)).collect()
}

/// The pattern graph of a matching series: 20 nodes, internal edge
/// probability 0.5, uniform signal. Shared by every host of the series.
pub fn make_pattern(series_seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(series_seed);
    let community = vec![0; PATTERN_NODES];
    let pairs = sample_pairs(&mut rng, &community, PATTERN_P, 0.0);
    let signal = random_signal(&mut rng, PATTERN_NODES);
    Graph {
        adjacency: SparseAdjacency::from_undirected(PATTERN_NODES, &pairs).expect("valid pattern"),
        signal,
        community,
        n_communities: 1,
    }
}

/// Host graph of 10 SBM communities with the pattern attached as an extra
/// block (community id 10, the last node indices). Pattern edges and signal
/// are copied verbatim; every pattern–host pair is joined with probability
/// `q_noise`, the same as host inter-community pairs.
pub fn make_matching_instance(pattern: &Graph, q_noise: f64, seed: u64) -> Result<TaskInstance, GraphError> {
    check_noise(q_noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..HOST_COMMUNITIES)
        .map(|_| rng.gen_range(HOST_SIZE_RANGE))
        .collect();
    let mut community = block_labels(&sizes);
    let host_n = community.len();
    let mut pairs = sample_pairs(&mut rng, &community, SBM_P, q_noise);
    let mut signal = random_signal(&mut rng, host_n);

    let pn = pattern.n_nodes();
    for u in 0..pn {
        for v in 0..host_n {
            if rng.gen::<f64>() < q_noise {
                pairs.push((v, host_n + u));
            }
        }
    }
    pairs.extend(
        pattern
            .adjacency
            .undirected_pairs()
            .into_iter()
            .map(|(a, b)| (host_n + a, host_n + b)),
    );
    signal.extend_from_slice(&pattern.signal);
    community.extend(std::iter::repeat_n(HOST_COMMUNITIES, pn));

    let n = host_n + pn;
    let targets = (0..n).map(|i| usize::from(i >= host_n)).collect();
    Ok(TaskInstance {
        graph: Graph {
            adjacency: SparseAdjacency::from_undirected(n, &pairs)?,
            signal,
            community,
            n_communities: HOST_COMMUNITIES + 1,
        },
        task: Task::Matching,
        targets,
        seed_mask: vec![false; n],
    })
}

/// 10 SBM communities of sizes in `[5, 25]` with one uniformly chosen seed
/// per community.
pub fn make_clustering_instance(q_noise: f64, seed: u64) -> Result<TaskInstance, GraphError> {
    check_noise(q_noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (0..CLUSTERING_COMMUNITIES)
        .map(|_| rng.gen_range(CLUSTERING_SIZE_RANGE))
        .collect();
    let community = block_labels(&sizes);
    let n = community.len();
    let pairs = sample_pairs(&mut rng, &community, SBM_P, q_noise);
    let mut seed_mask = vec![false; n];
    let mut start = 0;
    for &s in &sizes {
        seed_mask[start + rng.gen_range(0..s)] = true;
        start += s;
    }
    Ok(TaskInstance {
        graph: Graph {
            adjacency: SparseAdjacency::from_undirected(n, &pairs)?,
            signal: vec![0; n],
            community: community.clone(),
            n_communities: CLUSTERING_COMMUNITIES,
        },
        task: Task::Clustering,
        targets: community,
        seed_mask,
    })
}

/// Generator of one task's instances at a fixed noise level. Matching
/// sources hold the pattern shared by all their instances.
#[derive(Clone, Debug)]
pub struct InstanceSource {
    task: Task,
    q_noise: f64,
    pattern: Option<Graph>,
}

impl InstanceSource {
    pub fn new(task: Task, q_noise: f64, series_seed: u64) -> Result<Self, GraphError> {
        check_noise(q_noise)?;
        let pattern = (task == Task::Matching).then(|| make_pattern(series_seed));
        Ok(InstanceSource { task, q_noise, pattern })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn q_noise(&self) -> f64 {
        self.q_noise
    }

    pub fn generate(&self, seed: u64) -> Result<TaskInstance, GraphError> {
        match &self.pattern {
            Some(p) => make_matching_instance(p, self.q_noise, seed),
            None => make_clustering_instance(self.q_noise, seed),
        }
    }
}
