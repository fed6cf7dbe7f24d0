//! Round-synchronous message passing on directed edges.
//!
//! With `w = A^{ℓ-1}_{v→i} u^ℓ_{v→i}` the messages of one round are
//!
//! ```text
//! u^{ℓ+1}_{i→j} = (k-1)^{-1/2} Σ_{v ∈ ∂i \ j} w_{v→i}
//! u^{ℓ+1}_i     = k^{-1/2}     Σ_{v ∈ ∂i}     w_{v→i}
//! z_i          += √δ · B^ℓ_i · u^{ℓ+1}_i
//! ```
//!
//! with `A^{-1} = 1` and `u^0_{i→j} = u^0_i ~ N(0,1)`. The same recursion is
//! run on the infinite k-regular tree, either by materializing the
//! neighbourhood of an edge or by population dynamics for large `k`.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::rng::{normal, stream, Domain};
use crate::stats::{covariance, ks_standard_normal, Estimate, Moments};

/// How a schedule meets `E[A²] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Exact,
    Approximate,
}

/// Supplier of the coefficient sequences `A^ℓ` (edges) and `B^ℓ` (vertices).
///
/// Each directed edge and each vertex carries a `State` summarizing its own
/// message history. Round `ℓ` reads the coefficient from the state holding
/// `u^0..u^ℓ`, then advances it with `u^{ℓ+1}`.
pub trait Schedule: Sync {
    type State: Clone + Send + Sync;

    fn delta(&self) -> f64;
    fn rounds(&self) -> usize;
    /// Declared bound `K` on every emitted coefficient.
    fn bound(&self) -> f64;
    fn normalization(&self) -> Normalization;
    /// True when flipping the sign of every message leaves the law of the
    /// recursion unchanged (even coefficients, odd state updates).
    fn sign_symmetric(&self) -> bool;

    /// `c^{-1}`, the weight on the initial messages in the first round.
    fn initial_coef(&self) -> f64 {
        1.0
    }
    fn init(&self, u0: f64) -> Self::State;
    fn edge_coef(&self, state: &Self::State, round: usize) -> f64;
    fn vertex_coef(&self, state: &Self::State, round: usize) -> f64;
    fn advance(&self, state: &Self::State, round: usize, u_new: f64) -> Self::State;
    fn descriptor(&self) -> String;

    /// `(state^{ℓ+1}, A^ℓ)`.
    fn step(&self, state: &Self::State, round: usize, u_new: f64) -> (Self::State, f64) {
        (self.advance(state, round, u_new), self.edge_coef(state, round))
    }
}

type HistoryFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

/// Adapter for coefficients that depend on the whole history `(u^0, ..., u^ℓ)`.
/// Memory is `O(L)` per edge; the concrete schedules use compact states.
pub struct FullHistory {
    pub delta: f64,
    pub rounds: usize,
    pub bound: f64,
    pub normalization: Normalization,
    pub sign_symmetric: bool,
    pub edge: Box<HistoryFn>,
    pub vertex: Box<HistoryFn>,
    pub name: String,
}

impl Schedule for FullHistory {
    type State = Vec<f64>;

    fn delta(&self) -> f64 {
        self.delta
    }
    fn rounds(&self) -> usize {
        self.rounds
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn normalization(&self) -> Normalization {
        self.normalization
    }
    fn sign_symmetric(&self) -> bool {
        self.sign_symmetric
    }
    fn init(&self, u0: f64) -> Vec<f64> {
        vec![u0]
    }
    fn edge_coef(&self, h: &Vec<f64>, round: usize) -> f64 {
        (self.edge)(round, h)
    }
    fn vertex_coef(&self, h: &Vec<f64>, round: usize) -> f64 {
        (self.vertex)(round, h)
    }
    fn advance(&self, h: &Vec<f64>, _round: usize, u_new: f64) -> Vec<f64> {
        let mut h = h.clone();
        h.push(u_new);
        h
    }
    fn descriptor(&self) -> String {
        format!("history:{}", self.name)
    }
}

/// Options for [`run`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Subtract the mean of the outgoing products `A·u` each round.
    ///
    /// On a finite regular graph the constant vector is an eigenvector of the
    /// non-backtracking operator with eigenvalue `k − 1`, so its component of
    /// the messages grows like `√(k−1)^ℓ` and swamps the output for moderate
    /// `n`. Removing it each round is exact for linear schedules and a no-op
    /// in the tree limit.
    pub center: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { center: true }
    }
}

/// Per-round summaries of one graph run.
#[derive(Debug, Clone, Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Mean of `(A^ℓ)²` over directed edges.
    pub mean_a2: f64,
    /// Mean of `(u^{ℓ+1}_{i→j})²` over directed edges.
    pub mean_u2_edge: f64,
    /// Mean of `(u^{ℓ+1}_i)²` over vertices.
    pub mean_u2_vertex: f64,
    pub max_abs_a: f64,
    pub max_abs_b: f64,
    /// Coefficients whose magnitude exceeded the declared bound.
    pub bound_violations: usize,
    /// Mean removed by centering (0 when disabled).
    pub removed_mean: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub z: Vec<f64>,
    pub u0: Vec<f64>,
    pub rounds: Vec<RoundStats>,
}

/// `u^0_i` for every vertex.
pub fn initial_messages(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .into_par_iter()
        .map(|i| normal(&mut stream(seed, Domain::InitialMessage, i as u64)))
        .collect()
}

const CHUNK: usize = 4096;

/// Sum with a fixed reduction tree, so the result does not depend on the
/// number of worker threads.
fn stable_sum(xs: &[f64]) -> f64 {
    let parts: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().sum()).collect();
    parts.iter().sum()
}

fn stable_max_abs(xs: &[f64]) -> f64 {
    xs.par_chunks(CHUNK)
        .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .reduce(|| 0.0, f64::max)
}

pub fn run<S: Schedule>(g: &RegularGraph, sched: &S, seed: u64) -> Result<RunOutput> {
    run_with(g, sched, seed, RunOptions::default())
}

/// Runs `sched.rounds()` rounds on `g` and returns `z`.
pub fn run_with<S: Schedule>(g: &RegularGraph, sched: &S, seed: u64, opts: RunOptions) -> Result<RunOutput> {
    let (n, k) = (g.n(), g.k());
    if k < 3 {
        return Err(Error::param(format!("message passing needs k >= 3, got {k}")));
    }
    let rounds = sched.rounds();
    if rounds == 0 {
        return Err(Error::param("schedule has no rounds"));
    }
    let sd = sched.delta().sqrt();
    let (se, sv) = (1.0 / ((k - 1) as f64).sqrt(), 1.0 / (k as f64).sqrt());
    let bound = sched.bound();
    let rev = g.rev_table();

    let u0 = initial_messages(n, seed);
    let mut u: Vec<f64> = (0..n * k).map(|e| u0[e / k]).collect();
    let mut a_prev = vec![sched.initial_coef(); n * k];
    let mut edge_state: Vec<S::State> = (0..n * k).into_par_iter().map(|e| sched.init(u0[e / k])).collect();
    let mut vertex_state: Vec<S::State> = u0.par_iter().map(|&x| sched.init(x)).collect();
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n * k];
    let mut stats = Vec::with_capacity(rounds);

    for l in 0..rounds {
        w.par_iter_mut()
            .zip(a_prev.par_iter().zip(u.par_iter()))
            .for_each(|(w, (a, u))| *w = a * u);
        let removed_mean = if opts.center {
            let m = stable_sum(&w) / (n * k) as f64;
            w.par_iter_mut().for_each(|x| *x -= m);
            m
        } else {
            0.0
        };

        let mut a_cur = vec![0.0; n * k];
        let mut b_cur = vec![0.0; n];
        let mut uv = vec![0.0; n];
        u.par_chunks_mut(k)
            .zip(a_cur.par_chunks_mut(k))
            .zip(edge_state.par_chunks_mut(k))
            .zip(vertex_state.par_iter_mut())
            .zip(z.par_iter_mut().zip(b_cur.par_iter_mut().zip(uv.par_iter_mut())))
            .enumerate()
            .for_each(|(i, ((((ue, ae), st), vs), (zi, (bi, ui))))| {
                let base = i * k;
                let incoming = |s: usize| w[rev[base + s] as usize];
                let total: f64 = (0..k).map(incoming).sum();
                for s in 0..k {
                    let un = (total - incoming(s)) * se;
                    ae[s] = sched.edge_coef(&st[s], l);
                    st[s] = sched.advance(&st[s], l, un);
                    ue[s] = un;
                }
                let un = total * sv;
                *bi = sched.vertex_coef(vs, l);
                *vs = sched.advance(vs, l, un);
                *zi += sd * *bi * un;
                *ui = un;
            });

        let sq = |xs: &[f64]| -> f64 {
            let parts: Vec<f64> = xs.par_chunks(CHUNK).map(|c| c.iter().map(|x| x * x).sum()).collect();
            parts.iter().sum::<f64>() / xs.len() as f64
        };
        let violations = a_cur.par_iter().filter(|a| a.abs() > bound).count()
            + b_cur.par_iter().filter(|b| b.abs() > bound).count();
        stats.push(RoundStats {
            round: l,
            mean_a2: sq(&a_cur),
            mean_u2_edge: sq(&u),
            mean_u2_vertex: sq(&uv),
            max_abs_a: stable_max_abs(&a_cur),
            max_abs_b: stable_max_abs(&b_cur),
            bound_violations: violations,
            removed_mean,
        });
        a_prev = a_cur;
    }
    Ok(RunOutput { z, u0, rounds: stats })
}

/// Runs on a dedicated pool of `workers` threads.
pub fn run_on_workers<S: Schedule>(
    g: &RegularGraph,
    sched: &S,
    seed: u64,
    opts: RunOptions,
    workers: usize,
) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    pool.install(|| run_with(g, sched, seed, opts))
}

/// History of one message (edge or vertex): `u^0..u^R` and the coefficients
/// `c^0..c^{R-1}` emitted along the way.
#[derive(Debug, Clone)]
pub struct Trajectory<St> {
    pub u: Vec<f64>,
    pub coef: Vec<f64>,
    pub initial_coef: f64,
    pub state: St,
}

impl<St> Trajectory<St> {
    /// `c^{ℓ-1} u^ℓ`.
    #[inline]
    pub fn w(&self, l: usize) -> f64 {
        if l == 0 {
            self.initial_coef * self.u[0]
        } else {
            self.coef[l - 1] * self.u[l]
        }
    }
}

/// Trajectory of a message whose incoming sums are `sums[ℓ] = Σ w` for
/// `ℓ < R`, scaled by `scale`.
pub fn trajectory<S: Schedule>(sched: &S, u0: f64, sums: &[f64], scale: f64, vertex: bool) -> Trajectory<S::State> {
    let mut state = sched.init(u0);
    let mut u = Vec::with_capacity(sums.len() + 1);
    let mut coef = Vec::with_capacity(sums.len());
    u.push(u0);
    for (l, s) in sums.iter().enumerate() {
        let un = s * scale;
        coef.push(if vertex { sched.vertex_coef(&state, l) } else { sched.edge_coef(&state, l) });
        state = sched.advance(&state, l, un);
        u.push(un);
    }
    Trajectory { u, coef, initial_coef: sched.initial_coef(), state }
}

/// Fresh subtree below a directed edge, run for `rounds` rounds.
fn exact_edge<S: Schedule>(sched: &S, k: usize, rounds: usize, rng: &mut ChaCha8Rng) -> Trajectory<S::State> {
    let u0 = normal(rng);
    let mut sums = vec![0.0; rounds];
    if rounds > 0 {
        for _ in 0..k - 1 {
            let c = exact_edge(sched, k, rounds - 1, rng);
            for (l, s) in sums.iter_mut().enumerate() {
                *s += c.w(l);
            }
        }
    }
    trajectory(sched, u0, &sums, 1.0 / ((k - 1) as f64).sqrt(), false)
}

/// Both endpoints of one tree edge `(o, v)`.
#[derive(Debug, Clone)]
pub struct EdgePair<St> {
    pub o: Trajectory<St>,
    pub v: Trajectory<St>,
    pub o_to_v: Trajectory<St>,
    pub v_to_o: Trajectory<St>,
    pub z_o: f64,
    pub z_v: f64,
}

/// Assembles an edge from the summed messages of each side's other `k − 1`
/// children (`side_sums[ℓ]` for `ℓ < L`).
fn assemble_pair<S: Schedule>(
    sched: &S,
    k: usize,
    u0: (f64, f64),
    side_sums: (&[f64], &[f64]),
) -> EdgePair<S::State> {
    let rounds = side_sums.0.len();
    let (se, sv) = (1.0 / ((k - 1) as f64).sqrt(), 1.0 / (k as f64).sqrt());
    let o_to_v = trajectory(sched, u0.0, &side_sums.0[..rounds - 1], se, false);
    let v_to_o = trajectory(sched, u0.1, &side_sums.1[..rounds - 1], se, false);
    let so: Vec<f64> = (0..rounds).map(|l| side_sums.0[l] + v_to_o.w(l)).collect();
    let sv_: Vec<f64> = (0..rounds).map(|l| side_sums.1[l] + o_to_v.w(l)).collect();
    let o = trajectory(sched, u0.0, &so, sv, true);
    let v = trajectory(sched, u0.1, &sv_, sv, true);
    let out = |t: &Trajectory<S::State>| {
        sched.delta().sqrt() * (0..rounds).map(|l| t.coef[l] * t.u[l + 1]).sum::<f64>()
    };
    let (z_o, z_v) = (out(&o), out(&v));
    EdgePair { o, v, o_to_v, v_to_o, z_o, z_v }
}

/// Per-pair terms of the edge-correlation decomposition.
///
/// `first` is `(2√(k−1)/k) δ Σ_{ℓ=2}^L A^{ℓ−2}_{v̄→v} (u^{ℓ−1}_{v̄→v})² B^{ℓ−1}_v B^{ℓ−2}_{v̄}`
/// averaged over the two orientations; `second` is
/// `δ Σ_{ℓ=1}^L u^ℓ_v u^ℓ_{v̄} (B^{ℓ−1}_v − B^{ℓ−2}_v)(B^{ℓ−1}_{v̄} − B^{ℓ−2}_{v̄})` with `B^{−1} = 0`.
pub fn correlation_terms<St>(p: &EdgePair<St>, k: usize, delta: f64) -> (f64, f64) {
    let rounds = p.o.coef.len();
    let b = |t: &Trajectory<St>, l: isize| if l < 0 { 0.0 } else { t.coef[l as usize] };
    let one_side = |bar_to: &Trajectory<St>, head: &Trajectory<St>, bar: &Trajectory<St>| -> f64 {
        (2..=rounds)
            .map(|l| bar_to.coef[l - 2] * bar_to.u[l - 1].powi(2) * head.coef[l - 1] * bar.coef[l - 2])
            .sum()
    };
    let c = 2.0 * ((k - 1) as f64).sqrt() / k as f64;
    let first = 0.5 * c * delta * (one_side(&p.o_to_v, &p.v, &p.o) + one_side(&p.v_to_o, &p.o, &p.v));
    let second = delta
        * (1..=rounds as isize)
            .map(|l| {
                let (o, v) = (&p.o, &p.v);
                o.u[l as usize] * v.u[l as usize] * (b(o, l - 1) - b(o, l - 2)) * (b(v, l - 1) - b(v, l - 2))
            })
            .sum::<f64>();
    (first, second)
}

/// Largest materialized tree (vertices per replicate) we accept.
pub const TREE_NODE_BUDGET: f64 = 4.0e6;

fn check_tree_budget(k: usize, rounds: usize) -> Result<()> {
    let nodes = 2.0 * ((k - 1) as f64).powi(rounds as i32);
    if nodes > TREE_NODE_BUDGET {
        return Err(Error::Resource(format!(
            "edge neighbourhood has ~{nodes:.2e} vertices per replicate (k = {k}, L = {rounds}); \
             reduce k or L, or use population dynamics"
        )));
    }
    Ok(())
}

fn exact_pair<S: Schedule>(sched: &S, k: usize, rng: &mut ChaCha8Rng) -> EdgePair<S::State> {
    let rounds = sched.rounds();
    let u0 = (normal(rng), normal(rng));
    let mut sides = [vec![0.0; rounds], vec![0.0; rounds]];
    for side in sides.iter_mut() {
        for _ in 0..k - 1 {
            let c = exact_edge(sched, k, rounds - 1, rng);
            for (l, s) in side.iter_mut().enumerate() {
                *s += c.w(l);
            }
        }
    }
    assemble_pair(sched, k, u0, (&sides[0], &sides[1]))
}

/// Tree estimates gathered from one set of replicates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TreeEstimate {
    /// `E[z_o z_v]`.
    pub correlation: Estimate,
    /// First sum of the decomposition.
    pub first: Estimate,
    /// Second (difference-product) sum.
    pub second: Estimate,
    /// `first + second`, estimated per replicate.
    pub rhs: Estimate,
    /// `E[z_o²]`.
    pub variance: Estimate,
}

fn tree_replicates<S: Schedule>(
    k: usize,
    sched: &S,
    reps: usize,
    seed: u64,
    pair: impl Fn(&mut ChaCha8Rng) -> EdgePair<S::State> + Sync,
) -> TreeEstimate {
    let samples: Vec<[f64; 5]> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, Domain::Tree, r as u64);
            let p = pair(&mut rng);
            let (first, second) = correlation_terms(&p, k, sched.delta());
            [p.z_o * p.z_v, first, second, first + second, p.z_o * p.z_o]
        })
        .collect();
    let col = |j: usize| Estimate::from_samples(&samples.iter().map(|s| s[j]).collect::<Vec<_>>());
    TreeEstimate { correlation: col(0), first: col(1), second: col(2), rhs: col(3), variance: col(4) }
}

/// Exact Monte Carlo on the infinite k-regular tree: each replicate builds the
/// two-sided depth-`L` neighbourhood of an edge with fresh noise.
pub fn tree_monte_carlo<S: Schedule>(k: usize, sched: &S, reps: usize, seed: u64) -> Result<TreeEstimate> {
    if reps < 100 {
        return Err(Error::param(format!("need at least 100 replicates, got {reps}")));
    }
    if k < 3 || sched.rounds() == 0 {
        return Err(Error::param("need k >= 3 and at least one round"));
    }
    check_tree_budget(k, sched.rounds())?;
    Ok(tree_replicates(k, sched, reps, seed, |rng| exact_pair(sched, k, rng)))
}

/// The decomposition's right-hand side, estimated term by term on its own
/// replicates.
pub fn decomposition_rhs<S: Schedule>(k: usize, sched: &S, reps: usize, seed: u64) -> Result<TreeEstimate> {
    tree_monte_carlo(k, sched, reps, seed)
}

/// Population-dynamics approximation of the tree recursion.
///
/// Level `r` holds `size` independent-looking samples of a directed-edge
/// message history run for `r` rounds. A member of level `r + 1` draws its
/// `k − 1` children uniformly from level `r`; when the schedule is sign
/// symmetric each reused child gets an independent random global sign, which
/// decorrelates members sharing a child.
pub struct Population<St> {
    pub k: usize,
    pub level: usize,
    pub members: Vec<Trajectory<St>>,
}

impl<St: Clone + Send + Sync> Population<St> {
    pub fn initial<S: Schedule<State = St>>(k: usize, size: usize, sched: &S, seed: u64) -> Self {
        let members = (0..size)
            .into_par_iter()
            .map(|p| {
                let u0 = normal(&mut stream(seed, Domain::Population, p as u64));
                trajectory(sched, u0, &[], 1.0, false)
            })
            .collect();
        Self { k, level: 0, members }
    }

    /// Summed child messages `Σ_c ±w_c[ℓ]` for `ℓ ≤ level` over `count`
    /// children drawn with `rng`.
    fn child_sums<R: Rng>(&self, count: usize, flip: bool, rng: &mut R) -> Vec<f64> {
        let mut sums = vec![0.0; self.level + 1];
        let size = self.members.len();
        for _ in 0..count {
            let c = &self.members[rng.random_range(0..size)];
            let s = if flip && rng.random::<bool>() { -1.0 } else { 1.0 };
            for (l, x) in sums.iter_mut().enumerate() {
                *x += s * c.w(l);
            }
        }
        sums
    }

    pub fn next_level<S: Schedule<State = St>>(&self, sched: &S, seed: u64) -> Self {
        let k = self.k;
        let level = self.level + 1;
        let scale = 1.0 / ((k - 1) as f64).sqrt();
        let flip = sched.sign_symmetric();
        let members = (0..self.members.len())
            .into_par_iter()
            .map(|p| {
                let mut rng = stream(seed ^ (level as u64).rotate_left(40), Domain::Population, p as u64);
                let u0 = normal(&mut rng);
                let sums = self.child_sums(k - 1, flip, &mut rng);
                trajectory(sched, u0, &sums, scale, false)
            })
            .collect();
        Self { k, level, members }
    }

    /// Builds levels up to `rounds`.
    pub fn build<S: Schedule<State = St>>(k: usize, size: usize, sched: &S, rounds: usize, seed: u64) -> Self {
        let mut pop = Self::initial(k, size, sched, seed);
        while pop.level < rounds {
            pop = pop.next_level(sched, seed);
        }
        pop
    }

    /// Edge pairs whose children are drawn from this population, which must
    /// be at level `L − 1`.
    pub fn edge_pair<S: Schedule<State = St>, R: Rng>(&self, sched: &S, rng: &mut R) -> EdgePair<St> {
        let flip = sched.sign_symmetric();
        let u0 = (normal(rng), normal(rng));
        let a = self.child_sums(self.k - 1, flip, rng);
        let b = self.child_sums(self.k - 1, flip, rng);
        assemble_pair(sched, self.k, u0, (&a, &b))
    }
}

/// Tree estimates at large `k` via population dynamics.
pub fn tree_population<S: Schedule>(k: usize, sched: &S, pool: usize, reps: usize, seed: u64) -> Result<TreeEstimate> {
    if k < 3 || sched.rounds() == 0 {
        return Err(Error::param("need k >= 3 and at least one round"));
    }
    let pop = Population::build(k, pool, sched, sched.rounds() - 1, seed);
    Ok(tree_replicates(k, sched, reps, seed ^ 0x5eed, |rng| pop.edge_pair(sched, rng)))
}

/// Per-round normality summary of edge messages on the tree.
#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub k: usize,
    pub samples: usize,
    /// KS distance of `u^ℓ` to N(0,1), `ℓ = 0..=L`.
    pub ks: Vec<f64>,
    /// Sample covariance of `(u^a, u^b)`; row-major `(L+1) × (L+1)`.
    pub covariance: Vec<Estimate>,
    /// `E[(τ²_ℓ − 1)²]` with `τ²_ℓ = Σ_c (A^{ℓ−1}_c)² / (k − 1)` over children.
    pub tau_dispersion: Vec<Estimate>,
}

impl CltReport {
    pub fn dim(&self) -> usize {
        self.ks.len()
    }

    pub fn cov(&self, a: usize, b: usize) -> Estimate {
        self.covariance[a * self.dim() + b]
    }

    pub fn max_ks(&self) -> f64 {
        self.ks.iter().copied().fold(0.0, f64::max)
    }
}

/// Samples root edge-message vectors `(u^0, ..., u^L)` by population dynamics
/// (pool four times the sample count) and reports how Gaussian they are.
pub fn clt_diagnostics<S: Schedule>(k: usize, sched: &S, samples: usize, seed: u64) -> Result<CltReport> {
    if k < 3 || samples < 10 {
        return Err(Error::param("need k >= 3 and at least 10 samples"));
    }
    let rounds = sched.rounds();
    let pool = Population::build(k, 4 * samples, sched, rounds.saturating_sub(1), seed);
    let flip = sched.sign_symmetric();
    let scale = 1.0 / ((k - 1) as f64).sqrt();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed ^ 0xc17, Domain::Population, p as u64);
            let u0 = normal(&mut rng);
            let size = pool.members.len();
            let mut sums = vec![0.0; rounds];
            let mut tau = vec![0.0; rounds];
            for _ in 0..k - 1 {
                let c = &pool.members[rng.random_range(0..size)];
                let s = if flip && rng.random::<bool>() { -1.0 } else { 1.0 };
                for l in 0..rounds {
                    sums[l] += s * c.w(l);
                    let a = if l == 0 { c.initial_coef } else { c.coef[l - 1] };
                    tau[l] += a * a * scale * scale;
                }
            }
            (trajectory(sched, u0, &sums, scale, false).u, tau)
        })
        .collect();
    let dim = rounds + 1;
    let column = |l: usize| rows.iter().map(|r| r.0[l]).collect::<Vec<_>>();
    let cols: Vec<Vec<f64>> = (0..dim).map(column).collect();
    let ks = cols.iter().map(|c| ks_standard_normal(c)).collect();
    let mut cov = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            cov.push(covariance(&cols[a], &cols[b]));
        }
    }
    let tau_dispersion = (0..rounds)
        .map(|l| {
            let mut m = Moments::default();
            for r in &rows {
                m.push((r.1[l] - 1.0).powi(2));
            }
            m.estimate()
        })
        .collect();
    Ok(CltReport { k, samples, ks, covariance: cov, tau_dispersion })
}

/// One diagnostics row: `(round, statistic, value, stderr)`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagRow {
    pub round: Option<usize>,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
}

pub const DIAG_HEADER: &str = "round,statistic,value,stderr";

pub fn diagnostics_csv(rows: &[DiagRow]) -> String {
    let mut s = String::from(DIAG_HEADER);
    s.push('\n');
    for r in rows {
        let round = r.round.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{round},{},{},{}", r.statistic, r.value, r.stderr);
    }
    s
}

impl RunOutput {
    pub fn diagnostics(&self) -> Vec<DiagRow> {
        let mut rows = Vec::new();
        for r in &self.rounds {
            let mut push = |name: &str, v: f64| {
                rows.push(DiagRow { round: Some(r.round), statistic: name.to_string(), value: v, stderr: 0.0 })
            };
            push("mean_a2", r.mean_a2);
            push("mean_u2_edge", r.mean_u2_edge);
            push("mean_u2_vertex", r.mean_u2_vertex);
            push("max_abs_a", r.max_abs_a);
            push("max_abs_b", r.max_abs_b);
            push("bound_violations", r.bound_violations as f64);
            push("removed_mean", r.removed_mean);
        }
        rows
    }
}

impl CltReport {
    pub fn diagnostics(&self) -> Vec<DiagRow> {
        let mut rows = Vec::new();
        for (l, &d) in self.ks.iter().enumerate() {
            rows.push(DiagRow { round: Some(l), statistic: "ks".into(), value: d, stderr: 0.0 });
        }
        for a in 0..self.dim() {
            for b in a..self.dim() {
                let c = self.cov(a, b);
                rows.push(DiagRow { round: Some(b), statistic: format!("cov_u{a}_u{b}"), value: c.mean, stderr: c.se });
            }
        }
        for (l, t) in self.tau_dispersion.iter().enumerate() {
            rows.push(DiagRow { round: Some(l), statistic: "tau_dispersion".into(), value: t.mean, stderr: t.se });
        }
        rows
    }
}
