//! From real outputs to cuts: clipping, randomized rounding, balance repair,
//! and exact objective accounting.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::RegularGraph;
use crate::rng::{stream, symmetric_uniform, Domain};
use crate::Mode;

/// Componentwise clamp to `[−1, 1]`.
pub fn clip(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

#[inline]
fn sign(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// `σ_i = sign(ẑ_i − ũ_i)` with `ũ_i ~ U(−1, 1)` keyed by `(seed, i)`, so that
/// `E[σ_i | ẑ] = ẑ_i`. `sign(0) = +1`.
pub fn randomized_round(zhat: &[f64], seed: u64) -> Vec<i8> {
    zhat.par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let u = symmetric_uniform(&mut stream(seed, Domain::Rounding, i as u64));
            sign(z - u)
        })
        .collect()
}

/// Deterministic `sign(z)`, the rounding used by the wave baseline.
pub fn sign_round(z: &[f64]) -> Vec<i8> {
    z.iter().map(|&v| sign(v)).collect()
}

/// Flips `|Σσ|/2` majority vertices with the smallest `|ẑ|` (ties broken by
/// vertex id) so that `Σσ = 0`.
pub fn balance_repair(sigma: &[i8], zhat: &[f64]) -> Result<Vec<i8>> {
    let n = sigma.len();
    if n % 2 == 1 {
        return Err(Error::param(format!("cannot balance an odd number of vertices ({n})")));
    }
    if zhat.len() != n {
        return Err(Error::param("sigma and zhat lengths differ"));
    }
    let sum: i64 = sigma.iter().map(|&s| s as i64).sum();
    let mut out = sigma.to_vec();
    if sum == 0 {
        return Ok(out);
    }
    let majority: i8 = if sum > 0 { 1 } else { -1 };
    let mut candidates: Vec<usize> = (0..n).filter(|&i| sigma[i] == majority).collect();
    candidates.sort_by(|&a, &b| zhat[a].abs().total_cmp(&zhat[b].abs()).then(a.cmp(&b)));
    for &i in candidates.iter().take((sum.unsigned_abs() / 2) as usize) {
        out[i] = -majority;
    }
    Ok(out)
}

/// Where a cut came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub algo: String,
    pub mode: String,
    pub seed: u64,
    pub rounding_seed: u64,
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub rounds: Option<usize>,
    pub gamma_hash: Option<String>,
    pub schedule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutResult {
    #[serde(skip)]
    pub sigma: Vec<i8>,
    pub n: usize,
    pub k: usize,
    /// `U_G(σ) = (1/n) Σ_{(i,j) ∈ E} σ_i σ_j`.
    pub u_value: f64,
    pub edges_cut: u64,
    pub balance: i64,
    /// Objective per `√(k−1)`: `U/√(k−1)` for min-bisection and
    /// `−U/√(k−1)` for max-cut, so larger is better in both modes.
    pub normalized: f64,
    pub provenance: Provenance,
}

impl CutResult {
    /// `σ` as one `+1`/`-1` per line.
    pub fn sigma_text(&self) -> String {
        let mut s = String::with_capacity(self.sigma.len() * 3);
        for &x in &self.sigma {
            s.push_str(if x > 0 { "+1\n" } else { "-1\n" });
        }
        s
    }
}

/// Exact accounting of `σ` on `g`. `mode` only orients `normalized`.
pub fn evaluate(g: &RegularGraph, sigma: &[i8], mode: Mode) -> Result<CutResult> {
    let n = g.n();
    if sigma.len() != n {
        return Err(Error::param(format!("sigma has length {} but n = {n}", sigma.len())));
    }
    if sigma.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::param("sigma entries must be +1 or -1"));
    }
    let cut: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            g.neighbors(i)
                .iter()
                .filter(|&&j| (j as usize) > i && sigma[j as usize] != sigma[i])
                .count() as u64
        })
        .sum();
    let m = g.num_edges() as i64;
    let agree = m - cut as i64;
    let u_value = (agree - cut as i64) as f64 / n as f64;
    let scale = ((g.k() - 1) as f64).sqrt();
    let normalized = match mode {
        Mode::MinBis => u_value / scale,
        Mode::MaxCut => -u_value / scale,
    };
    Ok(CutResult {
        sigma: sigma.to_vec(),
        n,
        k: g.k(),
        u_value,
        edges_cut: cut,
        balance: sigma.iter().map(|&s| s as i64).sum(),
        normalized,
        provenance: Provenance { mode: mode.as_str().to_string(), ..Default::default() },
    })
}

/// `U_G` of a real vector: `(1/n) Σ_{(i,j) ∈ E} x_i x_j`.
pub fn u_of_reals(g: &RegularGraph, x: &[f64]) -> f64 {
    let s: f64 = (0..g.n())
        .into_par_iter()
        .map(|i| {
            g.neighbors(i)
                .iter()
                .filter(|&&j| (j as usize) > i)
                .map(|&j| x[i] * x[j as usize])
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    s / g.n() as f64
}
