//! Line-oriented instance format.
//!
//! ```text
//! # graphnet instance v1
//! <n_nodes> <n_communities> <task>
//! <signal> <community> <target> <seed>      one line per node
//! <u> <v>                                   one line per undirected edge, u < v
//! ```

use std::io::{BufRead, Write};

use super::{Graph, GraphError, Task, TaskInstance};
use crate::tensor::SparseAdjacency;

const MAGIC: &str = "# graphnet instance v1";

pub fn write_instance(inst: &TaskInstance, mut out: impl Write) -> Result<(), GraphError> {
    let g = &inst.graph;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{} {} {}", g.n_nodes(), g.n_communities, inst.task)?;
    for i in 0..g.n_nodes() {
        writeln!(
            out,
            "{} {} {} {}",
            g.signal[i],
            g.community[i],
            inst.targets[i],
            u8::from(inst.seed_mask[i])
        )?;
    }
    for (u, v) in g.adjacency.undirected_pairs() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse { line, msg: msg.into() }
}

fn fields<const N: usize>(text: &str, line: usize) -> Result<[&str; N], GraphError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    parts
        .try_into()
        .map_err(|p: Vec<&str>| parse_err(line, format!("expected {N} fields, found {}", p.len())))
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, GraphError> {
    s.parse().map_err(|_| parse_err(line, format!("bad number '{s}'")))
}

pub fn read_instance(input: impl BufRead) -> Result<TaskInstance, GraphError> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || -> Result<Option<(usize, String)>, GraphError> {
        match lines.next() {
            Some((n, l)) => Ok(Some((n, l?))),
            None => Ok(None),
        }
    };

    match next()? {
        Some((_, l)) if l == MAGIC => {}
        Some((n, _)) => return Err(parse_err(n, "missing format header")),
        None => return Err(parse_err(1, "empty input")),
    }
    let (hl, header) = next()?.ok_or_else(|| parse_err(2, "missing size header"))?;
    let [n, k, task] = fields::<3>(&header, hl)?;
    let n: usize = num(n, hl)?;
    let n_communities: usize = num(k, hl)?;
    let task: Task = task.parse().map_err(|e: String| parse_err(hl, e))?;

    let mut signal = Vec::with_capacity(n);
    let mut community = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut seed_mask = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = next()?.ok_or_else(|| parse_err(hl, "truncated node list"))?;
        let [s, c, t, m] = fields::<4>(&l, ln)?;
        signal.push(num(s, ln)?);
        community.push(num(c, ln)?);
        targets.push(num(t, ln)?);
        seed_mask.push(match m {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(ln, "seed flag must be 0 or 1")),
        });
    }
    let mut pairs = Vec::new();
    while let Some((ln, l)) = next()? {
        if l.trim().is_empty() {
            continue;
        }
        let [u, v] = fields::<2>(&l, ln)?;
        pairs.push((num(u, ln)?, num(v, ln)?));
    }
    let inst = TaskInstance {
        graph: Graph {
            adjacency: SparseAdjacency::from_undirected(n, &pairs)?,
            signal,
            community,
            n_communities,
        },
        task,
        targets,
        seed_mask,
    };
    inst.graph.validate()?;
    Ok(inst)
}
