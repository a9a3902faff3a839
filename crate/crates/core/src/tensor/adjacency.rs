use super::TensorError;

/// Directed edge list grouped by target vertex (CSR over incoming edges).
///
/// Edge `e` carries information `source(e) → target(e)`. Incoming edges of a
/// vertex are stored contiguously and sorted by source, so every aggregation
/// over `j → i` visits neighbors in ascending index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseAdjacency {
    n_nodes: usize,
    offsets: Vec<usize>,
    sources: Vec<usize>,
    targets: Vec<usize>,
}

impl SparseAdjacency {
    /// Builds a symmetric adjacency from undirected pairs. Both directions of
    /// each pair become directed edges.
    pub fn from_undirected(n_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self, TensorError> {
        let mut directed = Vec::with_capacity(pairs.len() * 2);
        for &(u, v) in pairs {
            if u == v {
                return Err(TensorError::Structural(format!("self-loop at vertex {u}")));
            }
            directed.push((u, v));
            directed.push((v, u));
        }
        Self::from_directed(n_nodes, &directed)
    }

    /// Builds from `(source, target)` pairs. Rejects out-of-range indices and
    /// duplicate pairs.
    pub fn from_directed(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, TensorError> {
        for &(s, t) in edges {
            if s >= n_nodes || t >= n_nodes {
                return Err(TensorError::Structural(format!(
                    "edge ({s}, {t}) out of range for {n_nodes} nodes"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize)> = edges.iter().map(|&(s, t)| (t, s)).collect();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(TensorError::Structural(format!(
                "duplicate edge ({}, {})",
                w[0].1, w[0].0
            )));
        }
        let mut offsets = vec![0usize; n_nodes + 1];
        for &(t, _) in &sorted {
            offsets[t + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        let targets = sorted.iter().map(|&(t, _)| t).collect();
        let sources = sorted.iter().map(|&(_, s)| s).collect();
        Ok(SparseAdjacency {
            n_nodes,
            offsets,
            sources,
            targets,
        })
    }

    pub fn empty(n_nodes: usize) -> Self {
        SparseAdjacency {
            n_nodes,
            offsets: vec![0; n_nodes + 1],
            sources: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of directed edges.
    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Edge index range of the edges entering `i`.
    pub fn incoming(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sources[self.incoming(i)]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Edge index of `source → target`, if present.
    pub fn edge_index(&self, source: usize, target: usize) -> Option<usize> {
        let range = self.incoming(target);
        let start = range.start;
        self.sources[range]
            .binary_search(&source)
            .ok()
            .map(|k| start + k)
    }

    pub fn is_symmetric(&self) -> bool {
        self.sources
            .iter()
            .zip(&self.targets)
            .all(|(&s, &t)| self.edge_index(t, s).is_some())
    }

    /// Undirected pairs `(u, v)` with `u < v`, in ascending order.
    pub fn undirected_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = self
            .sources
            .iter()
            .zip(&self.targets)
            .filter(|(s, t)| s < t)
            .map(|(&s, &t)| (s, t))
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let edges: Vec<(usize, usize)> = self
            .sources
            .iter()
            .zip(&self.targets)
            .map(|(&s, &t)| (perm[s], perm[t]))
            .collect();
        Self::from_directed(self.n_nodes, &edges).expect("permutation preserves validity")
    }

    /// Dense 0/1 matrix with `a[i][j] = 1` iff `j → i`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_nodes]; self.n_nodes];
        for (&s, &t) in self.sources.iter().zip(&self.targets) {
            a[t][s] = 1.0;
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        assert!(SparseAdjacency::from_directed(3, &[(0, 1), (0, 1)]).is_err());
        assert!(SparseAdjacency::from_directed(3, &[(0, 3)]).is_err());
        assert!(SparseAdjacency::from_undirected(3, &[(1, 1)]).is_err());
    }

    #[test]
    fn undirected_is_symmetric_and_sorted() {
        let adj = SparseAdjacency::from_undirected(4, &[(2, 0), (1, 0), (3, 2)]).unwrap();
        assert!(adj.is_symmetric());
        assert_eq!(adj.n_edges(), 6);
        assert_eq!(adj.neighbors(0), &[1, 2]);
        assert_eq!(adj.neighbors(2), &[0, 3]);
        assert_eq!(adj.undirected_pairs(), vec![(0, 1), (0, 2), (2, 3)]);
        assert_eq!(adj.degree(1), 1);
    }

    #[test]
    fn edge_index_lookup() {
        let adj = SparseAdjacency::from_undirected(3, &[(0, 1), (1, 2)]).unwrap();
        let e = adj.edge_index(2, 1).unwrap();
        assert_eq!((adj.sources()[e], adj.targets()[e]), (2, 1));
        assert!(adj.edge_index(0, 2).is_none());
    }
}
