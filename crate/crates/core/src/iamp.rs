//! The Parisi-driven schedule.
//!
//! Every directed edge and vertex carries a scalar state
//! `x^{ℓ+1} = x^ℓ + b(ℓδ, x^ℓ) δ + √δ u^{ℓ+1}` with `x^0 = √δ u^0`, and emits
//! `a(ℓδ, x^ℓ) = ξ(ℓδ) ∂_xxΦ(ℓδ, x^ℓ)`, where `b = γ ∂_xΦ`. The per-round
//! constants `ξ` make `E[a²] = 1`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Normalization, Population, Schedule};
use crate::error::{Error, Result};
use crate::parisi::ParisiSolution;
use crate::rng::{normal, stream, Domain};
use crate::stats::{Estimate, Moments};
use crate::Mode;

/// Headroom of the declared coefficient bound over the largest grid value.
pub const K_CAP_FACTOR: f64 = 1.05;
pub const DEFAULT_XI_REPS: usize = 100_000;

/// How the normalizers `ξ` are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum XiMode {
    /// Second moments under the `k → ∞` surrogate chain.
    LargeK,
    /// Second moments under the tree recursion at this degree, by population
    /// dynamics.
    FiniteK(usize),
}

pub struct IampSchedule {
    sol: Arc<ParisiSolution>,
    delta: f64,
    eta: f64,
    rounds: usize,
    xi: Vec<f64>,
    /// Relative standard error of each estimated second moment.
    xi_rel_se: Vec<f64>,
    k_cap: f64,
    mode: Mode,
    xi_mode: XiMode,
    edge_scale: f64,
    grid_exits: AtomicU64,
    clip_events: AtomicU64,
    warnings: Vec<String>,
}

impl Clone for IampSchedule {
    fn clone(&self) -> Self {
        Self {
            sol: self.sol.clone(),
            delta: self.delta,
            eta: self.eta,
            rounds: self.rounds,
            xi: self.xi.clone(),
            xi_rel_se: self.xi_rel_se.clone(),
            k_cap: self.k_cap,
            mode: self.mode,
            xi_mode: self.xi_mode,
            edge_scale: self.edge_scale,
            grid_exits: AtomicU64::new(0),
            clip_events: AtomicU64::new(0),
            warnings: self.warnings.clone(),
        }
    }
}

impl std::fmt::Debug for IampSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IampSchedule")
            .field("delta", &self.delta)
            .field("eta", &self.eta)
            .field("rounds", &self.rounds)
            .field("xi", &self.xi)
            .field("k_cap", &self.k_cap)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

/// `⌊(1 − η)/δ⌋`, robust to the representation error of decimal inputs.
pub fn round_count(delta: f64, eta: f64) -> usize {
    ((1.0 - eta) / delta * (1.0 + 1e-12)).floor() as usize
}

pub fn validate_params(delta: f64, eta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 0.2) {
        return Err(Error::param(format!("delta = {delta} outside (0, 0.2]")));
    }
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::param(format!("eta = {eta} outside (0, 0.5)")));
    }
    let rounds = round_count(delta, eta);
    if rounds == 0 {
        return Err(Error::param("no rounds fit in 1 - eta"));
    }
    Ok(rounds)
}

impl IampSchedule {
    /// Schedule with `ξ ≡ 1` and no clipping; the starting point of calibration.
    fn uncalibrated(sol: Arc<ParisiSolution>, delta: f64, eta: f64, mode: Mode, xi_mode: XiMode) -> Result<Self> {
        let rounds = validate_params(delta, eta)?;
        let mut warnings = Vec::new();
        let width = eta.sqrt();
        if width < 4.0 * sol.dx() {
            warnings.push(format!(
                "eta = {eta}: curvature near t = 1 - eta spans only {:.1} grid cells",
                width / sol.dx()
            ));
        }
        Ok(Self {
            sol,
            delta,
            eta,
            rounds,
            xi: vec![1.0; rounds],
            xi_rel_se: vec![0.0; rounds],
            k_cap: f64::INFINITY,
            mode,
            xi_mode,
            edge_scale: 1.0,
            grid_exits: AtomicU64::new(0),
            clip_events: AtomicU64::new(0),
            warnings,
        })
    }

    /// Sets `K_cap` to the headroom factor times the largest `|ξ ∂_xxΦ|` over
    /// grid positions at the round times.
    fn finalize_cap(&mut self) {
        let sol = &self.sol;
        let mut top = 0.0f64;
        for l in 0..self.rounds {
            let t = l as f64 * self.delta;
            let row_max = sol
                .x_grid()
                .iter()
                .map(|&x| sol.phi_xx_at(t, x).0.abs())
                .fold(0.0, f64::max);
            top = top.max(self.xi[l] * row_max);
        }
        self.k_cap = K_CAP_FACTOR * top;
    }

    pub fn solution(&self) -> &ParisiSolution {
        &self.sol
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn xi_rel_se(&self) -> &[f64] {
        &self.xi_rel_se
    }

    pub fn xi_mode(&self) -> XiMode {
        self.xi_mode
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k_cap(&self) -> f64 {
        self.k_cap
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Number of coefficient evaluations whose state fell off the grid.
    pub fn grid_exits(&self) -> u64 {
        self.grid_exits.load(Ordering::Relaxed)
    }

    /// Number of coefficients clipped to `±K_cap`.
    pub fn clip_events(&self) -> u64 {
        self.clip_events.load(Ordering::Relaxed)
    }

    /// Same schedule for the other objective.
    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut s = self.clone();
        s.mode = mode;
        s
    }

    /// Multiplies every edge coefficient by `factor`, breaking the
    /// normalization on purpose. Used to check that diagnostics notice.
    pub fn misnormalized(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.edge_scale = factor;
        s.k_cap *= factor.abs().max(1.0);
        s
    }

    /// `∂_xxΦ(t, x)`.
    pub fn a_hat(&self, t: f64, x: f64) -> f64 {
        let (v, out) = self.sol.phi_xx_at(t, x);
        if out {
            self.grid_exits.fetch_add(1, Ordering::Relaxed);
        }
        v
    }

    /// `a(ℓδ, x)`, clipped to `±K_cap`.
    pub fn a(&self, round: usize, x: f64) -> f64 {
        let v = self.xi[round] * self.a_hat(round as f64 * self.delta, x);
        if v.abs() > self.k_cap {
            self.clip_events.fetch_add(1, Ordering::Relaxed);
            v.clamp(-self.k_cap, self.k_cap)
        } else {
            v
        }
    }

    /// Extension of `a` to all `t ∈ [0, Lδ)` by rounding the time up to the
    /// next round for `ξ`.
    pub fn a_continuous(&self, t: f64, x: f64) -> f64 {
        let l = ((t / self.delta).ceil() as usize).min(self.rounds - 1);
        self.xi[l] * self.a_hat(t, x)
    }

    /// `b(t, x) = γ(t) ∂_xΦ(t, x)`.
    pub fn b(&self, t: f64, x: f64) -> f64 {
        let (v, out) = self.sol.phi_x_at(t, x);
        if out {
            self.grid_exits.fetch_add(1, Ordering::Relaxed);
        }
        self.sol.gamma().at(t) * v
    }

    /// Largest finite-difference slope of `b(t, ·)` over grid rows with
    /// `t ≤ t_max`.
    pub fn b_lipschitz(&self, t_max: f64) -> f64 {
        let sol = &self.sol;
        let dx = sol.dx();
        let mut top = 0.0f64;
        for (it, &t) in sol.t_grid().iter().enumerate() {
            if t > t_max {
                break;
            }
            let g = sol.gamma().at(t);
            let row = sol.phi_x_row(it);
            for w in row.windows(2) {
                top = top.max(g * (w[1] - w[0]).abs() / dx);
            }
        }
        top
    }

    pub fn descriptor_json(&self) -> serde_json::Value {
        serde_json::json!({
            "algo": "iamp",
            "mode": self.mode.as_str(),
            "delta": self.delta,
            "eta": self.eta,
            "rounds": self.rounds,
            "gamma_hash": self.sol.gamma().hash_hex(),
            "xi_mode": match self.xi_mode { XiMode::LargeK => "large_k".to_string(), XiMode::FiniteK(k) => format!("finite_k({k})") },
            "xi": self.xi,
            "k_cap": self.k_cap,
        })
    }
}

impl Schedule for IampSchedule {
    type State = f64;

    fn delta(&self) -> f64 {
        self.delta
    }
    fn rounds(&self) -> usize {
        self.rounds
    }
    fn bound(&self) -> f64 {
        self.k_cap
    }
    fn normalization(&self) -> Normalization {
        Normalization::Approximate
    }
    fn sign_symmetric(&self) -> bool {
        true
    }
    // Max-cut runs the recursion on `-A`, including the first round.
    fn initial_coef(&self) -> f64 {
        match self.mode {
            Mode::MinBis => 1.0,
            Mode::MaxCut => -1.0,
        }
    }
    fn init(&self, u0: f64) -> f64 {
        self.delta.sqrt() * u0
    }
    fn edge_coef(&self, x: &f64, round: usize) -> f64 {
        let a = self.edge_scale * self.a(round, *x);
        match self.mode {
            Mode::MinBis => a,
            Mode::MaxCut => -a,
        }
    }
    fn vertex_coef(&self, x: &f64, round: usize) -> f64 {
        self.a(round, *x)
    }
    fn advance(&self, x: &f64, round: usize, u_new: f64) -> f64 {
        let t = round as f64 * self.delta;
        x + self.b(t, *x) * self.delta + self.delta.sqrt() * u_new
    }
    fn descriptor(&self) -> String {
        format!(
            "iamp(mode={},delta={},eta={},L={},gamma={})",
            self.mode,
            self.delta,
            self.eta,
            self.rounds,
            &self.sol.gamma().hash_hex()[..12]
        )
    }
}

/// Samples of the surrogate chain `X^δ` and its output `Z^δ`.
#[derive(Debug, Clone)]
pub struct AuxiliaryProcess {
    pub delta: f64,
    pub rounds: usize,
    pub reps: usize,
    /// `x[r * (L+1) + ℓ] = X^δ_ℓ` for replicate `r`.
    pub x: Vec<f64>,
    /// `z[r * (L+1) + ℓ] = Z^δ_ℓ`.
    pub z: Vec<f64>,
    /// `E[∂_xxΦ(ℓδ, X^δ_ℓ)²]` for `ℓ = 0..=L`.
    pub second_moment: Vec<Estimate>,
    /// `E[∂_xxΦ(ℓδ, X^δ_ℓ)]` for `ℓ = 0..=L`.
    pub first_moment: Vec<Estimate>,
    /// `ξ_ℓ = second_moment^{-1/2}`.
    pub xi: Vec<f64>,
}

impl AuxiliaryProcess {
    pub fn x_at(&self, r: usize, l: usize) -> f64 {
        self.x[r * (self.rounds + 1) + l]
    }

    pub fn z_at(&self, r: usize, l: usize) -> f64 {
        self.z[r * (self.rounds + 1) + l]
    }

    /// `Σ_{ℓ=2}^{L} ξ_ℓ E[∂_xxΦ(ℓδ, X^δ_ℓ)] δ`: the large-degree edge value
    /// per `√(k−1)` of the schedule on the tree.
    pub fn tree_value(&self) -> f64 {
        (2..=self.rounds)
            .map(|l| self.xi[l] * self.first_moment[l].mean * self.delta)
            .sum()
    }
}

/// Simulates `X^δ` with i.i.d. N(0,1) drivers, computes `ξ` from it, then
/// accumulates `Z^δ_ℓ = √δ Σ_{j ≤ ℓ} a((j−1)δ, X^δ_{j−1}) U_j`.
pub fn simulate_auxiliary(sol: &ParisiSolution, delta: f64, rounds: usize, reps: usize, seed: u64) -> Result<AuxiliaryProcess> {
    let noise: Vec<f64> = (0..reps)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut rng = stream(seed, Domain::Auxiliary, r as u64);
            (0..=rounds).map(move |_| normal(&mut rng)).collect::<Vec<_>>()
        })
        .collect();
    simulate_auxiliary_with_noise(sol, delta, rounds, &noise)
}

/// As [`simulate_auxiliary`] with caller-supplied drivers
/// `noise[r * (L+1) + ℓ] = U_ℓ`, for coupling with a continuous path.
pub fn simulate_auxiliary_with_noise(sol: &ParisiSolution, delta: f64, rounds: usize, noise: &[f64]) -> Result<AuxiliaryProcess> {
    if !(delta > 0.0) || rounds as f64 * delta > 1.0 + 1e-12 {
        return Err(Error::param(format!("L·delta = {} exceeds 1", rounds as f64 * delta)));
    }
    let w = rounds + 1;
    if noise.is_empty() || noise.len() % w != 0 {
        return Err(Error::param("noise length is not a multiple of L + 1"));
    }
    let reps = noise.len() / w;
    let sd = delta.sqrt();
    let x: Vec<f64> = noise
        .par_chunks(w)
        .flat_map_iter(|u| {
            let mut xs = Vec::with_capacity(w);
            let mut x = sd * u[0];
            xs.push(x);
            for l in 0..rounds {
                let t = l as f64 * delta;
                x += sol.gamma().at(t) * sol.phi_x_at(t, x).0 * delta + sd * u[l + 1];
                xs.push(x);
            }
            xs
        })
        .collect();
    let (mut second_moment, mut first_moment) = (Vec::with_capacity(w), Vec::with_capacity(w));
    for l in 0..w {
        let t = l as f64 * delta;
        let (m1, m2) = (0..reps)
            .into_par_iter()
            .fold(
                || (Moments::default(), Moments::default()),
                |(mut m1, mut m2), r| {
                    let a = sol.phi_xx_at(t, x[r * w + l]).0;
                    m1.push(a);
                    m2.push(a * a);
                    (m1, m2)
                },
            )
            .reduce(|| (Moments::default(), Moments::default()), |a, b| (a.0.merge(b.0), a.1.merge(b.1)));
        first_moment.push(m1.estimate());
        second_moment.push(m2.estimate());
    }
    let xi: Vec<f64> = second_moment.iter().map(|m| 1.0 / m.mean.sqrt()).collect();
    let z: Vec<f64> = (0..reps)
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut zs = Vec::with_capacity(w);
            let mut z = 0.0;
            zs.push(z);
            for l in 1..=rounds {
                let t = (l - 1) as f64 * delta;
                z += sd * xi[l - 1] * sol.phi_xx_at(t, x[r * w + l - 1]).0 * noise[r * w + l];
                zs.push(z);
            }
            zs
        })
        .collect();
    Ok(AuxiliaryProcess { delta, rounds, reps, x, z, second_moment, first_moment, xi })
}

/// Builds the schedule from a solved PDE. `mc_reps` is the replicate count
/// for `LargeK` and the population size for `FiniteK`.
pub fn build_schedule(
    sol: Arc<ParisiSolution>,
    delta: f64,
    eta: f64,
    xi_mode: XiMode,
    mc_reps: usize,
    seed: u64,
    mode: Mode,
) -> Result<IampSchedule> {
    if mc_reps < 100 {
        return Err(Error::param("need at least 100 calibration replicates"));
    }
    let mut s = IampSchedule::uncalibrated(sol, delta, eta, mode, xi_mode)?;
    let rounds = s.rounds;
    let moments: Vec<Estimate> = match xi_mode {
        XiMode::LargeK => {
            let aux = simulate_auxiliary(&s.sol, delta, rounds, mc_reps, seed)?;
            aux.second_moment[..rounds].to_vec()
        }
        XiMode::FiniteK(k) => {
            if k < 3 {
                return Err(Error::param("finite-k calibration needs k >= 3"));
            }
            // Level r holds states x^r; its law fixes ξ_r, which level r+1 uses.
            let mut pop = Population::initial(k, mc_reps, &s, seed);
            let mut out = Vec::with_capacity(rounds);
            for r in 0..rounds {
                let t = r as f64 * delta;
                let m = second_moment_of(&pop.members.iter().map(|m| m.state).collect::<Vec<_>>(), &s, t);
                s.xi[r] = 1.0 / m.mean.sqrt();
                s.xi_rel_se[r] = m.se / m.mean;
                out.push(m);
                if r + 1 < rounds {
                    pop = pop.next_level(&s, seed);
                }
            }
            out
        }
    };
    for (r, m) in moments.iter().enumerate() {
        if !(m.mean >= 1e-6) {
            return Err(Error::Normalization(format!(
                "second moment {:.3e} of the curvature at round {r} is too small",
                m.mean
            )));
        }
        s.xi[r] = 1.0 / m.mean.sqrt();
        s.xi_rel_se[r] = m.se / m.mean;
    }
    s.finalize_cap();
    s.grid_exits.store(0, Ordering::Relaxed);
    Ok(s)
}

fn second_moment_of(states: &[f64], s: &IampSchedule, t: f64) -> Estimate {
    states
        .par_iter()
        .fold(Moments::default, |mut m, &x| {
            let a = s.sol.phi_xx_at(t, x).0;
            m.push(a * a);
            m
        })
        .reduce(Moments::default, Moments::merge)
        .estimate()
}

/// Empirical `E[(A^ℓ)²]` on the tree at degree `k`, from an independent
/// population, next to the calibration error of `ξ_ℓ`.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizationCheck {
    pub round: usize,
    pub mean_a2: Estimate,
    /// Standard error combining the check sample and the calibration sample.
    pub combined_se: f64,
}

impl NormalizationCheck {
    pub fn passes(&self, sigmas: f64) -> bool {
        (self.mean_a2.mean - 1.0).abs() <= sigmas * self.combined_se
    }
}

pub fn check_normalization<S: Schedule<State = f64>>(
    sched: &S,
    xi_rel_se: &[f64],
    k: usize,
    pool: usize,
    seed: u64,
) -> Vec<NormalizationCheck> {
    let pop = Population::build(k, pool, sched, sched.rounds(), seed);
    (0..sched.rounds())
        .map(|l| {
            let mut m = Moments::default();
            for t in &pop.members {
                m.push(t.coef[l] * t.coef[l]);
            }
            let e = m.estimate();
            let cal = e.mean * xi_rel_se.get(l).copied().unwrap_or(0.0);
            NormalizationCheck { round: l, mean_a2: e, combined_se: (e.se * e.se + cal * cal).sqrt() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_count_handles_decimal_inputs() {
        assert_eq!(round_count(0.1, 0.1), 9);
        assert_eq!(round_count(0.05, 0.1), 18);
        assert_eq!(round_count(0.025, 0.1), 36);
        assert_eq!(round_count(0.02, 0.1), 45);
        assert!(validate_params(0.3, 0.1).is_err());
        assert!(validate_params(0.1, 0.0).is_err());
    }
}
