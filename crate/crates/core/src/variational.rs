//! Random-walker (combinatorial Dirichlet) labeling: harmonic potentials on
//! the unit-weight graph Laplacian with seeded boundary values, solved by
//! Jacobi-preconditioned conjugate gradient.

use thiserror::Error;

use crate::exec::Execution;
use crate::graph::TaskInstance;
use crate::tensor::SparseAdjacency;
use crate::training::accuracy_of;

/// Relative residual at which CG stops.
pub const CG_TOLERANCE: f64 = 1e-8;
/// CG gives up after this many iterations per unknown.
pub const CG_MAX_ITER_FACTOR: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("no seeds given")]
    NoSeeds,
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("CG did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Square sparse matrix in compressed rows, columns sorted within a row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut offsets = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        CsrMatrix {
            n_rows: offsets.len() - 1,
            n_cols,
            offsets,
            cols,
            vals,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n_rows) {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| {
                let mut r = vec![0.0; self.n_cols];
                for (c, v) in self.row(i) {
                    r[c] = v;
                }
                r
            })
            .collect()
    }
}

/// `L = D − A` with unit edge weights.
pub fn build_laplacian(adj: &SparseAdjacency) -> CsrMatrix {
    let n = adj.n_nodes();
    let rows = (0..n)
        .map(|i| {
            let nb = adj.neighbors(i);
            let mut row: Vec<(usize, f64)> = nb.iter().map(|&j| (j, -1.0)).collect();
            row.push((i, nb.len() as f64));
            row
        })
        .collect();
    CsrMatrix::from_rows(n, rows)
}

/// Outcome of one conjugate-gradient solve.
#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `a · x = b` for symmetric positive definite `a` with a Jacobi
/// preconditioner, from `x = 0`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution, VariationalError> {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.get(i, i);
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        a.mul_vec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(VariationalError::NoConvergence {
        iterations: max_iter,
        residual: rel,
    })
}

/// The reduced system on the unlabeled nodes of seeded components.
#[derive(Clone, Debug)]
pub struct LaplacianSystem {
    /// Node ids of the unknowns, in system order.
    pub unlabeled: Vec<usize>,
    /// Seeded node ids.
    pub labeled: Vec<usize>,
    /// `L_U`, unlabeled × unlabeled.
    pub l_u: CsrMatrix,
    /// `B`, unlabeled × labeled.
    pub b: CsrMatrix,
}

fn components(adj: &SparseAdjacency) -> Vec<usize> {
    let n = adj.n_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in adj.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    stack.push(v);
                }
            }
        }
        next += 1;
    }
    comp
}

impl LaplacianSystem {
    /// Splits `L` by `labeled`; unlabeled nodes whose component contains no
    /// labeled node are left out of the system.
    pub fn build(adj: &SparseAdjacency, labeled: &[usize]) -> Self {
        let n = adj.n_nodes();
        let comp = components(adj);
        let mut seeded_comp = vec![false; n];
        let mut is_labeled = vec![false; n];
        for &l in labeled {
            seeded_comp[comp[l]] = true;
            is_labeled[l] = true;
        }
        let unlabeled: Vec<usize> = (0..n).filter(|&i| !is_labeled[i] && seeded_comp[comp[i]]).collect();
        let labeled: Vec<usize> = (0..n).filter(|&i| is_labeled[i]).collect();
        let mut u_pos = vec![usize::MAX; n];
        let mut l_pos = vec![usize::MAX; n];
        for (k, &i) in unlabeled.iter().enumerate() {
            u_pos[i] = k;
        }
        for (k, &i) in labeled.iter().enumerate() {
            l_pos[i] = k;
        }
        let mut lu_rows = Vec::with_capacity(unlabeled.len());
        let mut b_rows = Vec::with_capacity(unlabeled.len());
        for &i in &unlabeled {
            let nb = adj.neighbors(i);
            let mut lu = vec![(u_pos[i], nb.len() as f64)];
            let mut br = Vec::new();
            for &j in nb {
                if is_labeled[j] {
                    br.push((l_pos[j], -1.0));
                } else {
                    lu.push((u_pos[j], -1.0));
                }
            }
            lu_rows.push(lu);
            b_rows.push(br);
        }
        LaplacianSystem {
            l_u: CsrMatrix::from_rows(unlabeled.len(), lu_rows),
            b: CsrMatrix::from_rows(labeled.len(), b_rows),
            unlabeled,
            labeled,
        }
    }

    /// `−B · m` for the labeled indicator `m`.
    pub fn rhs(&self, indicator: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.unlabeled.len()];
        self.b.mul_vec(indicator, &mut y);
        y.iter_mut().for_each(|v| *v = -*v);
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletResult {
    /// Class per node.
    pub labels: Vec<usize>,
    /// `potentials[i][c]`: probability that a walker from `i` first reaches
    /// a seed of class `c`.
    pub potentials: Vec<Vec<f64>>,
    /// Nodes in components without any seed; labeled with the most frequent
    /// seed class.
    pub unseeded: Vec<usize>,
    pub cg_iterations: usize,
}

/// Labels every node from `seeds` (node, class) by solving one Dirichlet
/// problem per class and taking the argmax potential.
pub fn dirichlet_solve(
    adj: &SparseAdjacency,
    seeds: &[(usize, usize)],
    n_classes: usize,
    exec: Execution,
) -> Result<DirichletResult, VariationalError> {
    let n = adj.n_nodes();
    if seeds.is_empty() {
        return Err(VariationalError::NoSeeds);
    }
    let mut seed_class = vec![None; n];
    for &(i, c) in seeds {
        if i >= n || c >= n_classes {
            return Err(VariationalError::InvalidSeed(format!("({i}, {c})")));
        }
        match seed_class[i] {
            Some(prev) if prev != c => {
                return Err(VariationalError::InvalidSeed(format!("node {i} seeded as {prev} and {c}")));
            }
            _ => seed_class[i] = Some(c),
        }
    }
    let labeled: Vec<usize> = (0..n).filter(|&i| seed_class[i].is_some()).collect();
    let sys = LaplacianSystem::build(adj, &labeled);
    let max_iter = CG_MAX_ITER_FACTOR * sys.unlabeled.len().max(1);

    let solves = exec.map_range(n_classes, |c| {
        let m: Vec<f64> = sys
            .labeled
            .iter()
            .map(|&i| f64::from(u8::from(seed_class[i] == Some(c))))
            .collect();
        pcg(&sys.l_u, &sys.rhs(&m), CG_TOLERANCE, max_iter)
    });
    let solves = solves.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut counts = vec![0usize; n_classes];
    for c in seed_class.iter().flatten() {
        counts[*c] += 1;
    }
    let fallback = (0..n_classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);

    let one_hot = |c: usize| (0..n_classes).map(|k| f64::from(u8::from(k == c))).collect::<Vec<_>>();
    let mut potentials = vec![Vec::new(); n];
    let mut in_system = vec![false; n];
    for (k, &i) in sys.unlabeled.iter().enumerate() {
        potentials[i] = solves.iter().map(|s| s.x[k]).collect();
        in_system[i] = true;
    }
    let mut unseeded = Vec::new();
    for i in 0..n {
        if let Some(c) = seed_class[i] {
            potentials[i] = one_hot(c);
        } else if !in_system[i] {
            potentials[i] = one_hot(fallback);
            unseeded.push(i);
        }
    }
    let labels = potentials
        .iter()
        .map(|p| {
            let mut best = 0;
            for (c, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Ok(DirichletResult {
        labels,
        potentials,
        unseeded,
        cg_iterations: solves.iter().map(|s| s.iterations).sum(),
    })
}

/// Solves a clustering instance from its seeds and returns the result with
/// its macro-averaged accuracy over all nodes.
pub fn solve_instance(inst: &TaskInstance, exec: Execution) -> Result<(DirichletResult, f64), VariationalError> {
    let res = dirichlet_solve(&inst.graph.adjacency, &inst.seeds(), inst.task.n_classes(), exec)?;
    let acc = accuracy_of(&res.labels, &inst.targets);
    Ok((res, acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_laplacian() {
        let adj = SparseAdjacency::from_undirected(2, &[(0, 1)]).unwrap();
        assert_eq!(build_laplacian(&adj).to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let adj = SparseAdjacency::from_undirected(2, &[(0, 1)]).unwrap();
        let s = pcg(&build_laplacian(&adj), &[0.0, 0.0], 1e-8, 10).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
    }
}
