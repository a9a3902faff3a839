use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};
use crate::tensor::SparseAdjacency;

/// |z| above which [`validate_sbm_stats`] flags a density.
pub const Z_FLAG: f64 = 4.0;

const MIN_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    /// Intra-community edge probability.
    pub p: f64,
    /// Inter-community edge probability.
    pub q: f64,
    pub community_sizes: Vec<usize>,
}

impl SbmParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.q) {
            return Err(GraphError::InvalidParams(format!(
                "probabilities must lie in [0, 1] (p={}, q={})",
                self.p, self.q
            )));
        }
        if self.q > self.p {
            return Err(GraphError::InvalidParams(format!("q={} exceeds p={}", self.q, self.p)));
        }
        if self.community_sizes.is_empty() || self.community_sizes.contains(&0) {
            return Err(GraphError::InvalidParams("community sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.community_sizes.iter().sum()
    }

    /// Number of unordered intra- and inter-community vertex pairs.
    pub fn pair_counts(&self) -> (usize, usize) {
        let n = self.n_nodes();
        let intra: usize = self.community_sizes.iter().map(|&s| s * (s - 1) / 2).sum();
        (intra, n * (n - 1) / 2 - intra)
    }
}

/// Community id per node, blocks laid out contiguously.
pub(crate) fn block_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect()
}

/// Samples every unordered pair once, in lexicographic order.
pub(crate) fn sample_pairs(rng: &mut impl Rng, labels: &[usize], p: f64, q: f64) -> Vec<(usize, usize)> {
    let n = labels.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let prob = if labels[i] == labels[j] { p } else { q };
            if rng.gen::<f64>() < prob {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Draws an SBM graph. Signals are left at 0; task builders fill them in.
pub fn sbm_generate(params: &SbmParams, seed: u64) -> Result<Graph, GraphError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let community = block_labels(&params.community_sizes);
    let pairs = sample_pairs(&mut rng, &community, params.p, params.q);
    let n = community.len();
    Ok(Graph {
        adjacency: SparseAdjacency::from_undirected(n, &pairs)?,
        signal: vec![0; n],
        community,
        n_communities: params.community_sizes.len(),
    })
}

/// Empirical edge densities of a sample of SBM graphs against their
/// generating probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmReport {
    pub n_graphs: usize,
    pub intra_edges: usize,
    pub inter_edges: usize,
    pub intra_density: f64,
    pub inter_density: f64,
    pub z_intra: f64,
    pub z_inter: f64,
    /// Set when either |z| exceeds [`Z_FLAG`].
    pub flagged: bool,
}

fn z_score(successes: usize, trials: usize, prob: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mean = trials as f64 * prob;
    let sd = (trials as f64 * prob * (1.0 - prob)).sqrt();
    let diff = successes as f64 - mean;
    if sd == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / sd
    }
}

pub fn validate_sbm_stats(graphs: &[Graph], params: &SbmParams) -> Result<SbmReport, GraphError> {
    params.validate()?;
    if graphs.len() < MIN_SAMPLES {
        return Err(GraphError::InsufficientData {
            got: graphs.len(),
            need: MIN_SAMPLES,
        });
    }
    let (intra_pairs, inter_pairs) = params.pair_counts();
    let (mut intra, mut inter) = (0usize, 0usize);
    for g in graphs {
        if g.n_nodes() != params.n_nodes() {
            return Err(GraphError::InvalidParams(format!(
                "graph has {} nodes, parameters describe {}",
                g.n_nodes(),
                params.n_nodes()
            )));
        }
        for (u, v) in g.adjacency.undirected_pairs() {
            if g.community[u] == g.community[v] {
                intra += 1;
            } else {
                inter += 1;
            }
        }
    }
    let k = graphs.len();
    let density = |edges: usize, pairs: usize| {
        if pairs == 0 {
            0.0
        } else {
            edges as f64 / (pairs * k) as f64
        }
    };
    let z_intra = z_score(intra, intra_pairs * k, params.p);
    let z_inter = z_score(inter, inter_pairs * k, params.q);
    Ok(SbmReport {
        n_graphs: k,
        intra_edges: intra,
        inter_edges: inter,
        intra_density: density(intra, intra_pairs),
        inter_density: density(inter, inter_pairs),
        z_intra,
        z_inter,
        flagged: z_intra.abs() > Z_FLAG || z_inter.abs() > Z_FLAG,
    })
}
