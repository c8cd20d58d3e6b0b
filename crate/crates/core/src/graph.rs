//! Combinatorial graphs as dense 0/1 adjacency matrices, plus the generators
//! used by the curvature flow experiments.
//!
//! `path(n)` and `cycle(n)` take the number of *vertices*. A "path of length 12"
//! in the experiments has 12 vertices and 11 edges.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::seeded_rng;

/// Retry cap for connected rejection sampling in [`rand_adj_mat`].
pub const DEFAULT_CONNECT_RETRIES: usize = 10_000;

/// A finite simple (possibly mixed) combinatorial graph.
///
/// `adj[i][j] = 1` means a directed edge `i -> j`; a two-sided edge sets both
/// entries. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct CombinatorialGraph {
    n: usize,
    adj: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    adj: Vec<Vec<u8>>,
}

impl TryFrom<GraphRepr> for CombinatorialGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        if r.adj.len() != r.n {
            return Err(invalid(format!("adj has {} rows, expected {}", r.adj.len(), r.n)));
        }
        CombinatorialGraph::from_rows(&r.adj)
    }
}

impl From<CombinatorialGraph> for GraphRepr {
    fn from(g: CombinatorialGraph) -> Self {
        GraphRepr {
            n: g.n,
            adj: g.rows(),
        }
    }
}

/// Out-neighbour lists and out-degrees of every vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SphereData {
    pub neighbors: Vec<Vec<usize>>,
    pub degrees: Vec<usize>,
}

impl CombinatorialGraph {
    /// Graph on `n` vertices without edges.
    pub fn empty(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(invalid("a graph needs at least one vertex"));
        }
        Ok(Self {
            n,
            adj: vec![0; n * n],
        })
    }

    /// Builds a graph from adjacency rows; entries must be 0/1 with a zero diagonal.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Self::empty(n)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("row {i} has length {}, expected {n}", row.len())));
            }
            for (j, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 if i == j => return Err(invalid(format!("self-loop at vertex {i}"))),
                    1 => g.adj[i * n + j] = 1,
                    _ => return Err(invalid(format!("adjacency entry ({i},{j}) = {a} is not 0/1"))),
                }
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.adj.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    fn set_two_sided(&mut self, i: usize, j: usize) {
        let n = self.n;
        self.adj[i * n + j] = 1;
        self.adj[j * n + i] = 1;
    }

    /// Out-neighbours of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.adj[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|(_, &a)| a == 1).map(|(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Number of directed edges (a two-sided edge counts twice).
    pub fn directed_edge_count(&self) -> usize {
        self.adj.iter().filter(|&&a| a == 1).count()
    }

    /// Number of two-sided edges.
    pub fn undirected_edge_count(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.has_edge(i, j) && self.has_edge(j, i) {
                    count += 1;
                }
            }
        }
        count
    }

    /// True when every edge is two-sided.
    pub fn is_unmixed(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    /// Directed edges `(x, y)` in row-major order.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| self.neighbors(i).map(move |j| (i, j)))
            .collect()
    }
}

pub fn complete(n: usize) -> Result<CombinatorialGraph> {
    let mut g = CombinatorialGraph::empty(n)?;
    for i in 0..n {
        for j in i + 1..n {
            g.set_two_sided(i, j);
        }
    }
    Ok(g)
}

/// Path on `n` vertices `v_0 - v_1 - ... - v_{n-1}`.
pub fn path(n: usize) -> Result<CombinatorialGraph> {
    if n < 2 {
        return Err(invalid("path needs at least 2 vertices"));
    }
    let mut g = CombinatorialGraph::empty(n)?;
    for i in 0..n - 1 {
        g.set_two_sided(i, i + 1);
    }
    Ok(g)
}

/// Cycle on `n` vertices.
pub fn cycle(n: usize) -> Result<CombinatorialGraph> {
    if n < 3 {
        return Err(invalid("cycle needs at least 3 vertices"));
    }
    let mut g = CombinatorialGraph::empty(n)?;
    for i in 0..n {
        g.set_two_sided(i, (i + 1) % n);
    }
    Ok(g)
}

/// The `d`-dimensional hypercube; vertex `i` is the bitstring of `i`.
pub fn hypercube(d: usize) -> Result<CombinatorialGraph> {
    if d < 1 {
        return Err(invalid("hypercube dimension must be at least 1"));
    }
    if d > 20 {
        return Err(invalid("hypercube dimension too large for a dense matrix"));
    }
    let n = 1usize << d;
    let mut g = CombinatorialGraph::empty(n)?;
    for i in 0..n {
        for b in 0..d {
            let j = i ^ (1 << b);
            if i < j {
                g.set_two_sided(i, j);
            }
        }
    }
    Ok(g)
}

/// Cartesian product; vertex `(i, j)` maps to `i * n_b + j`.
pub fn cart_prod(a: &CombinatorialGraph, b: &CombinatorialGraph) -> CombinatorialGraph {
    let (na, nb) = (a.n, b.n);
    let n = na * nb;
    let mut adj = vec![0u8; n * n];
    for i in 0..na {
        for j in 0..nb {
            let u = i * nb + j;
            for j2 in b.neighbors(j) {
                adj[u * n + i * nb + j2] = 1;
            }
            for i2 in a.neighbors(i) {
                adj[u * n + i2 * nb + j] = 1;
            }
        }
    }
    CombinatorialGraph { n, adj }
}

/// Wedge sum identifying vertex `i` of `a` with vertex `j` of `b`.
///
/// `a` keeps indices `0..n_a`; the remaining vertices of `b` are appended in
/// their original order.
pub fn wedge_sum(
    a: &CombinatorialGraph,
    b: &CombinatorialGraph,
    i: usize,
    j: usize,
) -> Result<CombinatorialGraph> {
    if i >= a.n || j >= b.n {
        return Err(invalid(format!(
            "wedge vertices ({i}, {j}) out of range for sizes ({}, {})",
            a.n, b.n
        )));
    }
    let n = a.n + b.n - 1;
    let map_b = |v: usize| -> usize {
        match v.cmp(&j) {
            std::cmp::Ordering::Equal => i,
            std::cmp::Ordering::Less => a.n + v,
            std::cmp::Ordering::Greater => a.n + v - 1,
        }
    };
    let mut g = CombinatorialGraph::empty(n)?;
    for (u, v) in a.directed_edges() {
        g.adj[u * n + v] = 1;
    }
    for (u, v) in b.directed_edges() {
        g.adj[map_b(u) * n + map_b(v)] = 1;
    }
    Ok(g)
}

/// Disjoint union of `a` and `b` joined by one two-sided edge `i -- n_a + j`.
pub fn bridge_at(
    a: &CombinatorialGraph,
    b: &CombinatorialGraph,
    i: usize,
    j: usize,
) -> Result<CombinatorialGraph> {
    if i >= a.n || j >= b.n {
        return Err(invalid(format!(
            "bridge vertices ({i}, {j}) out of range for sizes ({}, {})",
            a.n, b.n
        )));
    }
    let n = a.n + b.n;
    let mut g = CombinatorialGraph::empty(n)?;
    for (u, v) in a.directed_edges() {
        g.adj[u * n + v] = 1;
    }
    for (u, v) in b.directed_edges() {
        g.adj[(a.n + u) * n + a.n + v] = 1;
    }
    g.set_two_sided(i, a.n + j);
    Ok(g)
}

/// Erdos-Renyi graph: each unordered pair joined independently with probability `p`.
///
/// With `connected = true` whole graphs are resampled until connected, giving up
/// after [`DEFAULT_CONNECT_RETRIES`] draws.
pub fn rand_adj_mat(n: usize, p: f64, connected: bool, seed: u64) -> Result<CombinatorialGraph> {
    rand_adj_mat_with_retries(n, p, connected, seed, DEFAULT_CONNECT_RETRIES)
}

pub fn rand_adj_mat_with_retries(
    n: usize,
    p: f64,
    connected: bool,
    seed: u64,
    max_retries: usize,
) -> Result<CombinatorialGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = seeded_rng(seed);
    let attempts = if connected { max_retries.max(1) } else { 1 };
    for _ in 0..attempts {
        let mut g = CombinatorialGraph::empty(n)?;
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    g.set_two_sided(i, j);
                }
            }
        }
        if !connected || is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::RetryLimit {
        what: format!("connected G({n}, {p}) sample"),
        attempts,
    })
}

pub fn onespheres(a: &CombinatorialGraph) -> SphereData {
    let neighbors: Vec<Vec<usize>> = (0..a.n).map(|i| a.neighbors(i).collect()).collect();
    let degrees = neighbors.iter().map(Vec::len).collect();
    SphereData { neighbors, degrees }
}

/// Connectivity with every edge treated as two-sided.
pub fn is_connected(a: &CombinatorialGraph) -> bool {
    connected_under(a.n, |i, j| a.has_edge(i, j) || a.has_edge(j, i))
}

/// Breadth-first reachability from vertex 0 over a symmetric relation.
pub(crate) fn connected_under(n: usize, linked: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for (v, s) in seen.iter_mut().enumerate() {
            if !*s && linked(u, v) {
                *s = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}
