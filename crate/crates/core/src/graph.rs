//! k-regular graphs with a directed-edge index.
//!
//! Directed edge `i -> neighbors[i*k + s]` has id `e = i*k + s`, and `rev[e]`
//! is the id of the opposite direction. Messages live on these ids.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Cap on whole-pairing restarts during generation.
pub const MAX_RESTARTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    k: usize,
    neighbors: Vec<u32>,
    rev: Vec<u32>,
}

impl RegularGraph {
    /// Builds a graph from an undirected edge list, validating regularity.
    ///
    /// Slots are assigned in edge order. `line_of` maps an edge index to the
    /// line number reported in format errors.
    fn build(
        n: usize,
        k: usize,
        edges: &[(usize, usize)],
        line_of: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::param("n and k must be positive"));
        }
        if k >= n {
            return Err(Error::param(format!("degree {k} must be below n = {n}")));
        }
        if (n * k) % 2 == 1 {
            return Err(Error::param(format!("n*k = {} is odd", n * k)));
        }
        let mut neighbors = vec![u32::MAX; n * k];
        let mut rev = vec![u32::MAX; n * k];
        let mut degree = vec![0usize; n];
        for (idx, &(i, j)) in edges.iter().enumerate() {
            let line = line_of(idx);
            if i >= n || j >= n {
                return Err(Error::format(line, format!("vertex out of range in edge ({i}, {j})")));
            }
            if i == j {
                return Err(Error::format(line, format!("self-loop at vertex {i}")));
            }
            if neighbors[i * k..i * k + degree[i]].contains(&(j as u32)) {
                return Err(Error::format(line, format!("duplicate edge ({i}, {j})")));
            }
            if degree[i] == k || degree[j] == k {
                let v = if degree[i] == k { i } else { j };
                return Err(Error::format(line, format!("vertex {v} exceeds degree {k}")));
            }
            let ei = i * k + degree[i];
            let ej = j * k + degree[j];
            neighbors[ei] = j as u32;
            neighbors[ej] = i as u32;
            rev[ei] = ej as u32;
            rev[ej] = ei as u32;
            degree[i] += 1;
            degree[j] += 1;
        }
        if let Some(v) = degree.iter().position(|&d| d != k) {
            return Err(Error::format(
                line_of(edges.len()),
                format!("vertex {v} has degree {} but k = {k}", degree[v]),
            ));
        }
        Ok(Self { n, k, neighbors, rev })
    }

    pub fn from_edges(n: usize, k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::build(n, k, edges, |idx| idx + 1)
    }

    /// The cycle `C_n` (2-regular); handy for diagnostics tests.
    pub fn cycle(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, 2, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, n - 1, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_directed_edges(&self) -> usize {
        self.n * self.k
    }

    pub fn num_edges(&self) -> usize {
        self.n * self.k / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Head of directed edge `e`.
    #[inline]
    pub fn head(&self, e: usize) -> usize {
        self.neighbors[e] as usize
    }

    #[inline]
    pub fn tail(&self, e: usize) -> usize {
        e / self.k
    }

    #[inline]
    pub fn rev(&self, e: usize) -> usize {
        self.rev[e] as usize
    }

    pub fn rev_table(&self) -> &[u32] {
        &self.rev
    }

    /// Undirected edges `(i, j)` with `i < j`, ordered by `(i, slot)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n * self.k).filter_map(move |e| {
            let (i, j) = (self.tail(e), self.head(e));
            (i < j).then_some((i, j))
        })
    }

    /// Same graph with vertex `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::param("permutation length differs from n"));
        }
        let edges: Vec<_> = self.edges().map(|(i, j)| (perm[i], perm[j])).collect();
        Self::from_edges(self.n, self.k, &edges)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(self.to_edge_list().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = String::with_capacity(self.num_edges() * 12);
        let _ = writeln!(s, "{} {}", self.n, self.k);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(BufReader::new(f))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut header = None;
        let mut edges = Vec::new();
        let mut lines = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let mut it = line.split_whitespace();
            let (Some(a), Some(b)) = (it.next(), it.next()) else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::format(lineno, "expected two integers"));
            };
            if it.next().is_some() {
                return Err(Error::format(lineno, "trailing tokens"));
            }
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(lineno, format!("not a non-negative integer: {s:?}")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if header.is_none() {
                header = Some((a, b, lineno));
            } else {
                edges.push((a, b));
                lines.push(lineno);
            }
        }
        let Some((n, k, hline)) = header else {
            return Err(Error::format(1, "missing header \"n k\""));
        };
        if edges.len() != n * k / 2 || (n * k) % 2 == 1 {
            let at = lines.last().copied().unwrap_or(hline) + 1;
            return Err(Error::format(
                at,
                format!("expected {} edges for n = {n}, k = {k}, found {}", n * k / 2, edges.len()),
            ));
        }
        let last = lines.last().copied().unwrap_or(hline) + 1;
        Self::build(n, k, &edges, |idx| lines.get(idx).copied().unwrap_or(last)).map_err(
            |e| match e {
                Error::Parameter(msg) => Error::format(hline, msg),
                other => other,
            },
        )
    }
}

/// Random simple k-regular graph on `n` vertices.
///
/// Points (k per vertex) are paired uniformly at random; a pair that would
/// create a loop or a repeated edge is redrawn, and the whole pairing is
/// restarted if no admissible pair remains.
pub fn generate_random_regular(n: usize, k: usize, seed: u64) -> Result<RegularGraph> {
    if (n * k) % 2 == 1 {
        return Err(Error::param(format!("n*k = {} is odd", n * k)));
    }
    if k == 0 || k >= n {
        return Err(Error::param(format!("need 0 < k < n, got k = {k}, n = {n}")));
    }
    for attempt in 0..MAX_RESTARTS {
        let mut rng = stream(seed, Domain::Graph, attempt as u64);
        if let Some(edges) = try_pairing(n, k, &mut rng) {
            return RegularGraph::from_edges(n, k, &edges);
        }
    }
    Err(Error::Generation(format!(
        "no simple {k}-regular pairing on {n} vertices after {MAX_RESTARTS} restarts"
    )))
}

fn try_pairing<R: Rng>(n: usize, k: usize, rng: &mut R) -> Option<Vec<(usize, usize)>> {
    let mut points: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    let mut adj: Vec<Vec<u32>> = vec![Vec::with_capacity(k); n];
    let mut edges = Vec::with_capacity(n * k / 2);
    let admissible = |adj: &[Vec<u32>], u: u32, v: u32| u != v && !adj[u as usize].contains(&v);
    while !points.is_empty() {
        let mut misses = 0usize;
        loop {
            let len = points.len();
            let a = rng.random_range(0..len);
            let b = rng.random_range(0..len);
            if a != b && admissible(&adj, points[a], points[b]) {
                let (u, v) = (points[a], points[b]);
                adj[u as usize].push(v);
                adj[v as usize].push(u);
                edges.push((u as usize, v as usize));
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                points.swap_remove(hi);
                points.swap_remove(lo);
                break;
            }
            misses += 1;
            if misses % 64 == 0 && len <= 4096 {
                let stuck = !(0..len)
                    .any(|x| (x + 1..len).any(|y| admissible(&adj, points[x], points[y])));
                if stuck {
                    return None;
                }
            }
        }
    }
    Some(edges)
}

/// Local tree-likeness of a graph at radius `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreelikeReport {
    pub ell: usize,
    /// Fraction of vertices whose ball of radius `ell + 1` induces a tree.
    pub tree_fraction: f64,
    pub epsilon: f64,
    /// Shortest cycle length; `n + 1` when the graph has no cycle.
    pub girth: usize,
}

pub fn treelike_report(g: &RegularGraph, ell: usize) -> TreelikeReport {
    let trees = tree_ball_count(g, ell + 1);
    let tree_fraction = trees as f64 / g.n() as f64;
    TreelikeReport {
        ell,
        tree_fraction,
        epsilon: 1.0 - tree_fraction,
        girth: girth(g),
    }
}

/// Number of vertices whose radius-`radius` induced ball is a tree.
pub fn tree_ball_count(g: &RegularGraph, radius: usize) -> usize {
    (0..g.n())
        .into_par_iter()
        .map_init(
            || BallScratch::new(g.n()),
            |scratch, root| usize::from(scratch.ball_is_tree(g, root, radius)),
        )
        .sum()
}

struct BallScratch {
    stamp: Vec<u32>,
    depth: Vec<u32>,
    parent: Vec<u32>,
    epoch: u32,
    queue: VecDeque<u32>,
}

impl BallScratch {
    fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            depth: vec![0; n],
            parent: vec![u32::MAX; n],
            epoch: 0,
            queue: VecDeque::new(),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        self.queue.clear();
    }

    /// BFS to `radius`, returning false at the first edge that closes a cycle
    /// inside the induced ball (including edges between boundary vertices).
    fn ball_is_tree(&mut self, g: &RegularGraph, root: usize, radius: usize) -> bool {
        self.next_epoch();
        let ep = self.epoch;
        self.stamp[root] = ep;
        self.depth[root] = 0;
        self.parent[root] = u32::MAX;
        self.queue.push_back(root as u32);
        while let Some(u) = self.queue.pop_front() {
            let u = u as usize;
            let du = self.depth[u] as usize;
            for &w in g.neighbors(u) {
                let w = w as usize;
                if self.parent[u] as usize == w {
                    continue;
                }
                if self.stamp[w] == ep {
                    // Already in the ball and not our parent: a second path.
                    return false;
                }
                if du < radius {
                    self.stamp[w] = ep;
                    self.depth[w] = du as u32 + 1;
                    self.parent[w] = u as u32;
                    self.queue.push_back(w as u32);
                }
            }
        }
        true
    }
}

/// Exact girth by BFS from every vertex; `n + 1` for forests.
pub fn girth(g: &RegularGraph) -> usize {
    let n = g.n();
    let best = AtomicUsize::new(n + 1);
    (0..n).into_par_iter().for_each_init(
        || BallScratch::new(n),
        |s, root| {
            let cycle = s.shortest_cycle_through_bfs(g, root, &best);
            best.fetch_min(cycle, Ordering::Relaxed);
        },
    );
    best.into_inner()
}

impl BallScratch {
    fn shortest_cycle_through_bfs(&mut self, g: &RegularGraph, root: usize, best: &AtomicUsize) -> usize {
        self.next_epoch();
        let ep = self.epoch;
        let mut found = g.n() + 1;
        self.stamp[root] = ep;
        self.depth[root] = 0;
        self.parent[root] = u32::MAX;
        self.queue.push_back(root as u32);
        while let Some(u) = self.queue.pop_front() {
            let u = u as usize;
            let du = self.depth[u] as usize;
            let bound = found.min(best.load(Ordering::Relaxed));
            if 2 * du + 1 >= bound {
                break;
            }
            for &w in g.neighbors(u) {
                let w = w as usize;
                if self.parent[u] as usize == w {
                    continue;
                }
                if self.stamp[w] == ep {
                    found = found.min(du + self.depth[w] as usize + 1);
                } else {
                    self.stamp[w] = ep;
                    self.depth[w] = du as u32 + 1;
                    self.parent[w] = u as u32;
                    self.queue.push_back(w as u32);
                }
            }
        }
        found
    }
}
