//! Gaussian-wave baseline: `A ≡ 1`, `δ = 1`, and deterministic
//! `B^ℓ = β_{ℓ+1}` taken from an eigenvector of the `L × L` path adjacency
//! matrix `T`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::engine::{Normalization, Schedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveConfig {
    pub rounds: usize,
    /// Eigen-index in `1..=L`; 1 is the top of the spectrum, `L` the bottom.
    pub mode: usize,
    pub beta: Vec<f64>,
    pub rho: f64,
}

impl WaveConfig {
    pub fn new(rounds: usize, mode: usize) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::param("need at least one round"));
        }
        if mode == 0 || mode > rounds {
            return Err(Error::param(format!("mode {mode} outside 1..={rounds}")));
        }
        let theta = mode as f64 * PI / (rounds + 1) as f64;
        let mut beta: Vec<f64> = (1..=rounds).map(|j| (j as f64 * theta).sin()).collect();
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        beta.iter_mut().for_each(|b| *b /= norm);
        Ok(Self { rounds, mode, beta, rho: 2.0 * theta.cos() })
    }

    /// Top mode, for min-bisection.
    pub fn top(rounds: usize) -> Result<Self> {
        Self::new(rounds, 1)
    }

    /// Bottom mode, for max-cut.
    pub fn bottom(rounds: usize) -> Result<Self> {
        Self::new(rounds, rounds)
    }

    /// `T β`.
    pub fn t_times_beta(&self) -> Vec<f64> {
        let b = &self.beta;
        let l = b.len();
        (0..l)
            .map(|j| {
                let left = if j > 0 { b[j - 1] } else { 0.0 };
                let right = if j + 1 < l { b[j + 1] } else { 0.0 };
                left + right
            })
            .collect()
    }

    /// `sup |Tβ − ρβ|`.
    pub fn eigen_residual(&self) -> f64 {
        self.t_times_beta()
            .iter()
            .zip(&self.beta)
            .map(|(tb, b)| (tb - self.rho * b).abs())
            .fold(0.0, f64::max)
    }
}

/// The wave schedule; messages carry no state.
#[derive(Debug, Clone)]
pub struct WaveSchedule {
    cfg: WaveConfig,
}

pub fn make_wave_schedule(cfg: WaveConfig) -> WaveSchedule {
    WaveSchedule { cfg }
}

impl WaveSchedule {
    pub fn config(&self) -> &WaveConfig {
        &self.cfg
    }
}

impl Schedule for WaveSchedule {
    type State = ();

    fn delta(&self) -> f64 {
        1.0
    }
    fn rounds(&self) -> usize {
        self.cfg.rounds
    }
    fn bound(&self) -> f64 {
        1.0
    }
    fn normalization(&self) -> Normalization {
        Normalization::Exact
    }
    fn sign_symmetric(&self) -> bool {
        true
    }
    fn init(&self, _u0: f64) {}
    fn edge_coef(&self, _: &(), _round: usize) -> f64 {
        1.0
    }
    fn vertex_coef(&self, _: &(), round: usize) -> f64 {
        self.cfg.beta[round]
    }
    fn advance(&self, _: &(), _round: usize, _u_new: f64) {}
    fn descriptor(&self) -> String {
        format!("wave(L={},mode={})", self.cfg.rounds, self.cfg.mode)
    }
}

/// `E[z_v z_v̄] = (√(k−1)/k) ⟨β, Tβ⟩ = (√(k−1)/k) ρ` on the tree.
pub fn predicted_edge_correlation(cfg: &WaveConfig, k: usize) -> f64 {
    let quad: f64 = cfg.beta.iter().zip(cfg.t_times_beta()).map(|(b, tb)| b * tb).sum();
    ((k - 1) as f64).sqrt() / k as f64 * quad
}

/// Limit of `U` under sign rounding with the top mode:
/// `(k/π) arcsin(2√(k−1) cos(π/(L+1)) / k)`. Dividing by `√(k−1)` and letting
/// `k, L → ∞` gives `2/π`.
pub fn predicted_cut_value(k: usize, rounds: usize) -> f64 {
    let kf = k as f64;
    let rho = 2.0 * (kf - 1.0).sqrt() * (PI / (rounds + 1) as f64).cos();
    kf / PI * (rho / kf).asin()
}

/// The `k, L → ∞` value of `U / √(k−1)`.
pub const LARGE_K_LIMIT: f64 = 2.0 / PI;
