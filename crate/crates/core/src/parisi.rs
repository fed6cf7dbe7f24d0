//! Zero-temperature Parisi PDE for step order parameters.
//!
//! `Φ_t + (γ Φ_x² + Φ_xx)/2 = 0` on `[0,1] × ℝ` with `Φ(1,x) = |x|`. On an
//! interval where `γ = g` is constant, `exp(gΦ)` solves the backward heat
//! equation, so one step of length `Δ` is
//!
//! ```text
//! Φ(t - Δ, x) = (1/g) log E exp(g Φ(t, x + √Δ G))
//! ```
//!
//! which is evaluated as a discrete Gaussian convolution in log space. For
//! `g = 0` the step is the plain heat semigroup. Beyond `±x_max` the solution
//! is continued with slope `±1`.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{normal, stream, Domain};
use crate::stats::{Estimate, Moments};

pub const DEFAULT_M_T: usize = 512;
pub const DEFAULT_M_X: usize = 2049;
pub const DEFAULT_X_MAX: f64 = 8.0;
pub const DEFAULT_H: f64 = 1.0 / 512.0;

/// Kernel half-width in standard deviations.
const WINDOW_SIGMAS: f64 = 9.0;
/// Below this many grid spacings the sampled Gaussian is replaced by a
/// variance-matched mixture with a point mass.
const MIN_SIGMA_CELLS: f64 = 2.0;

/// Nondecreasing, nonnegative, right-continuous step function on `[0, 1]`.
///
/// `breakpoints = [0, t_1, ..., t_m]` and `values = [g_1, ..., g_m]`, with
/// `γ(t) = g_j` on `[t_{j-1}, t_j)`. If `t_m < 1` the last value extends to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaStep {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl GammaStep {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(Error::param(format!(
                "need m >= 1 values and m + 1 breakpoints, got {} and {}",
                values.len(),
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::param("first breakpoint must be 0"));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || *breakpoints.last().unwrap() > 1.0 {
            return Err(Error::param("breakpoints must increase strictly within [0, 1]"));
        }
        if values.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::param("gamma values must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("gamma values must be nondecreasing"));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(g: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![g])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn at(&self, t: f64) -> f64 {
        let j = self.breakpoints[1..self.values.len()].partition_point(|&b| b <= t);
        self.values[j]
    }

    /// Constant pieces `(start, end, g)` covering `[0, 1]`.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let m = self.values.len();
        (0..m).map(move |j| {
            let end = if j + 1 == m { 1.0 } else { self.breakpoints[j + 1] };
            (self.breakpoints[j], end, self.values[j])
        })
    }

    /// `½ ∫₀¹ t γ(t) dt`, exact for the step function.
    pub fn half_t_integral(&self) -> f64 {
        self.segments().map(|(a, b, g)| g * (b * b - a * a) / 4.0).sum()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }

    /// SHA-256 over the little-endian bytes of breakpoints and values.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        for x in self.breakpoints.iter().chain(&self.values) {
            h.update(x.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Grids of `Φ`, `Φ_x`, `Φ_xx` on a uniform `[0,1] × [-x_max, x_max]` mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ParisiSolution {
    gamma: GammaStep,
    x_max: f64,
    t_grid: Vec<f64>,
    x_grid: Vec<f64>,
    phi: Vec<f64>,
    phi_x: Vec<f64>,
    phi_xx: Vec<f64>,
}

/// Value of row `row` at integer offset `j` (possibly off-grid), continued
/// linearly with slope ±1.
#[inline]
fn ext(row: &[f64], j: isize, dx: f64) -> f64 {
    let last = row.len() as isize - 1;
    if j < 0 {
        row[0] - j as f64 * dx
    } else if j > last {
        row[last as usize] + (j - last) as f64 * dx
    } else {
        row[j as usize]
    }
}

/// Discrete probability kernel on `{-w, ..., w} · dx` with variance `var`.
struct Kernel {
    half: isize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Kernel {
    fn new(var: f64, dx: f64, g: f64) -> Self {
        let sigma = var.sqrt();
        let floor = MIN_SIGMA_CELLS * dx;
        // Point-mass fraction for tiny steps, chosen so the variance is exact.
        let (s, point_mass) = if sigma >= floor {
            (sigma, 0.0)
        } else {
            (floor, 1.0 - var / (floor * floor))
        };
        let half = ((g * var + WINDOW_SIGMAS * s) / dx).ceil() as isize;
        let mut weights: Vec<f64> = (-half..=half)
            .map(|m| {
                let y = m as f64 * dx;
                (-y * y / (2.0 * s * s)).exp()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        for (m, w) in (-half..=half).zip(weights.iter_mut()) {
            *w *= (1.0 - point_mass) / z;
            if m == 0 {
                *w += point_mass;
            }
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Self { half, weights, log_weights }
    }
}

/// One exact constant-γ step of variance `var` applied to output indices
/// `lo..=hi` of a row whose index 0 sits at `offset` in `row`.
fn propagate(row: &[f64], dx: f64, g: f64, var: f64, lo: isize, hi: isize) -> Result<Vec<f64>> {
    if var <= 0.0 {
        return Ok((lo..=hi).map(|i| ext(row, i, dx)).collect());
    }
    let k = Kernel::new(var, dx, g);
    let h = k.half;
    // |ΔΦ| ≤ h·dx inside the window, so this bounds every exponent.
    let small = g * h as f64 * dx <= 1.0;
    let out: Vec<f64> = (lo..=hi)
        .into_par_iter()
        .map(|i| {
            let base = ext(row, i, dx);
            if g == 0.0 {
                let s: f64 = (-h..=h)
                    .zip(&k.weights)
                    .map(|(m, w)| w * (ext(row, i + m, dx) - base))
                    .sum();
                base + s
            } else if small {
                let s: f64 = (-h..=h)
                    .zip(&k.weights)
                    .map(|(m, w)| w * (g * (ext(row, i + m, dx) - base)).exp_m1())
                    .sum();
                base + s.ln_1p() / g
            } else {
                let mut top = f64::NEG_INFINITY;
                for (m, lw) in (-h..=h).zip(&k.log_weights) {
                    top = top.max(lw + g * (ext(row, i + m, dx) - base));
                }
                let s: f64 = (-h..=h)
                    .zip(&k.log_weights)
                    .map(|(m, lw)| (lw + g * (ext(row, i + m, dx) - base) - top).exp())
                    .sum();
                base + (top + s.ln()) / g
            }
        })
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite value in log-domain step (g = {g}, var = {var})"
        )));
    }
    Ok(out)
}

/// Solves the PDE backward from `t = 1` on an `m_t × m_x` grid.
///
/// Grid steps that straddle a breakpoint of `gamma` are split so that every
/// sub-step has constant `γ`.
pub fn solve_pde(gamma: &GammaStep, m_t: usize, m_x: usize, x_max: f64) -> Result<ParisiSolution> {
    if m_t < 64 || m_x < 64 {
        return Err(Error::param(format!("grids need at least 64 points (m_t = {m_t}, m_x = {m_x})")));
    }
    if !(x_max >= 6.0) {
        return Err(Error::param(format!("x_max = {x_max} is below 6")));
    }
    let dx = 2.0 * x_max / (m_x - 1) as f64;
    let t_grid: Vec<f64> = (0..m_t).map(|i| i as f64 / (m_t - 1) as f64).collect();
    let mut phi = vec![0.0; m_t * m_x];
    let x_grid = make_x_grid(m_x, x_max);
    let hi = m_x as isize - 1;
    let mut row: Vec<f64> = x_grid.iter().map(|x| x.abs()).collect();
    phi[(m_t - 1) * m_x..].copy_from_slice(&row);
    for i in (0..m_t - 1).rev() {
        let (t0, t1) = (t_grid[i], t_grid[i + 1]);
        let mut cuts: Vec<f64> = vec![t1];
        cuts.extend(gamma.breakpoints().iter().rev().copied().filter(|&b| t0 < b && b < t1));
        cuts.push(t0);
        for w in cuts.windows(2) {
            let (b, a) = (w[0], w[1]);
            let g = gamma.at(0.5 * (a + b));
            row = propagate(&row, dx, g, b - a, 0, hi)?;
        }
        phi[i * m_x..(i + 1) * m_x].copy_from_slice(&row);
    }
    Ok(ParisiSolution::from_phi(gamma.clone(), m_t, x_max, x_grid, t_grid, phi))
}

fn make_x_grid(m_x: usize, x_max: f64) -> Vec<f64> {
    let dx = 2.0 * x_max / (m_x - 1) as f64;
    let c = (m_x - 1) as f64 / 2.0;
    (0..m_x).map(|i| (i as f64 - c) * dx).collect()
}

/// `Φ(0, 0)` for `gamma`, computing only the part of each time slice that can
/// influence the origin. One convolution per constant piece.
pub fn phi_origin(gamma: &GammaStep, dx: f64, x_max: f64) -> Result<f64> {
    let cap = (x_max / dx).round() as isize;
    let segs: Vec<(f64, f64, f64)> = gamma.segments().collect();
    // Radius needed at the start of each segment, from t = 0 forward.
    let mut radius = vec![0isize; segs.len() + 1];
    for (j, &(a, b, g)) in segs.iter().enumerate() {
        let var = b - a;
        let s = var.sqrt().max(MIN_SIGMA_CELLS * dx);
        let half = ((g * var + WINDOW_SIGMAS * s) / dx).ceil() as isize;
        radius[j + 1] = (radius[j] + half).min(cap);
    }
    let r = radius[segs.len()];
    // Rows are stored on indices -r..=r, shifted to 0..=2r.
    let mut row: Vec<f64> = (-r..=r).map(|i| (i as f64 * dx).abs()).collect();
    let mut cur = r;
    for (j, &(a, b, g)) in segs.iter().enumerate().rev() {
        let want = radius[j];
        row = propagate(&row, dx, g, b - a, cur - want, cur + want)?;
        cur = want;
    }
    Ok(row[cur as usize])
}

/// `P(γ)` via [`phi_origin`].
pub fn parisi_value_fast(gamma: &GammaStep, dx: f64, x_max: f64) -> Result<f64> {
    Ok(phi_origin(gamma, dx, x_max)? - gamma.half_t_integral())
}

impl ParisiSolution {
    fn from_phi(
        gamma: GammaStep,
        m_t: usize,
        x_max: f64,
        x_grid: Vec<f64>,
        t_grid: Vec<f64>,
        phi: Vec<f64>,
    ) -> Self {
        let m_x = x_grid.len();
        let dx = 2.0 * x_max / (m_x - 1) as f64;
        let mut phi_x = vec![0.0; m_t * m_x];
        let mut phi_xx = vec![0.0; m_t * m_x];
        phi_x
            .par_chunks_mut(m_x)
            .zip(phi_xx.par_chunks_mut(m_x))
            .zip(phi.par_chunks(m_x))
            .for_each(|((d1, d2), row)| {
                for i in 0..m_x {
                    let j = i as isize;
                    let (l, c, r) = (ext(row, j - 1, dx), row[i], ext(row, j + 1, dx));
                    d1[i] = (r - l) / (2.0 * dx);
                    d2[i] = (r - 2.0 * c + l) / (dx * dx);
                }
            });
        Self { gamma, x_max, t_grid, x_grid, phi, phi_x, phi_xx }
    }

    pub fn gamma(&self) -> &GammaStep {
        &self.gamma
    }

    pub fn m_t(&self) -> usize {
        self.t_grid.len()
    }

    pub fn m_x(&self) -> usize {
        self.x_grid.len()
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / (self.m_x() - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.m_t() - 1) as f64
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn phi_row(&self, it: usize) -> &[f64] {
        &self.phi[it * self.m_x()..(it + 1) * self.m_x()]
    }

    pub fn phi_x_row(&self, it: usize) -> &[f64] {
        &self.phi_x[it * self.m_x()..(it + 1) * self.m_x()]
    }

    pub fn phi_xx_row(&self, it: usize) -> &[f64] {
        &self.phi_xx[it * self.m_x()..(it + 1) * self.m_x()]
    }

    /// Bilinear interpolation of `field`. Returns `None` when `x` is outside
    /// the grid; callers decide how to continue.
    fn bilinear(&self, field: &[f64], t: f64, x: f64) -> Option<f64> {
        let m_x = self.m_x();
        let fx = (x + self.x_max) / self.dx();
        if !(fx >= 0.0 && fx <= (m_x - 1) as f64) {
            return None;
        }
        let ft = t.clamp(0.0, 1.0) * (self.m_t() - 1) as f64;
        let it = (ft.floor() as usize).min(self.m_t() - 2);
        let ix = (fx.floor() as usize).min(m_x - 2);
        let (wt, wx) = (ft - it as f64, fx - ix as f64);
        let at = |a: usize, b: usize| field[a * m_x + b];
        let lo = at(it, ix) * (1.0 - wx) + at(it, ix + 1) * wx;
        let hi = at(it + 1, ix) * (1.0 - wx) + at(it + 1, ix + 1) * wx;
        Some(lo * (1.0 - wt) + hi * wt)
    }

    /// `Φ(t, x)`, continued with slope ±1 off the grid.
    pub fn phi_at(&self, t: f64, x: f64) -> f64 {
        let xc = x.clamp(-self.x_max, self.x_max);
        self.bilinear(&self.phi, t, xc).unwrap() + (x.abs() - self.x_max).max(0.0)
    }

    /// `∂_xΦ(t, x)` and whether `x` had to be clamped to the grid.
    pub fn phi_x_at(&self, t: f64, x: f64) -> (f64, bool) {
        match self.bilinear(&self.phi_x, t, x) {
            Some(v) => (v, false),
            None => (x.signum(), true),
        }
    }

    /// `∂_xxΦ(t, x)` and whether `x` had to be clamped to the grid.
    pub fn phi_xx_at(&self, t: f64, x: f64) -> (f64, bool) {
        match self.bilinear(&self.phi_xx, t, x) {
            Some(v) => (v, false),
            None => (0.0, true),
        }
    }

    /// `Φ(0, 0)`.
    pub fn phi00(&self) -> f64 {
        self.phi_at(0.0, 0.0)
    }

    /// Largest `|∂_xxΦ|` over grid times `t ≤ t_max`.
    pub fn max_abs_phi_xx(&self, t_max: f64) -> f64 {
        (0..self.m_t())
            .filter(|&it| self.t_grid[it] <= t_max + 1e-12)
            .flat_map(|it| self.phi_xx_row(it).iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Binary container: magic, version, gamma, grid sizes, then `phi`
    /// row-major by time. All numbers little-endian. Derivative grids are
    /// recomputed on load, deterministically.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.gamma.steps() as u64).to_le_bytes())?;
        for x in self.gamma.breakpoints.iter().chain(&self.gamma.values) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&(self.m_t() as u64).to_le_bytes())?;
        w.write_all(&(self.m_x() as u64).to_le_bytes())?;
        w.write_all(&self.x_max.to_le_bytes())?;
        for x in &self.phi {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::format(0, format!("solution container: {msg}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != FORMAT_VERSION {
            return Err(bad("unsupported version"));
        }
        let m = read_u64(&mut r)? as usize;
        if m == 0 || m > 1 << 20 {
            return Err(bad("implausible step count"));
        }
        let breakpoints = read_f64s(&mut r, m + 1)?;
        let values = read_f64s(&mut r, m)?;
        let gamma = GammaStep::new(breakpoints, values)?;
        let m_t = read_u64(&mut r)? as usize;
        let m_x = read_u64(&mut r)? as usize;
        let x_max = f64::from_bits(read_u64(&mut r)?);
        if m_t < 2 || m_x < 2 || m_t.saturating_mul(m_x) > 1 << 28 {
            return Err(bad("implausible grid size"));
        }
        let phi = read_f64s(&mut r, m_t * m_x)?;
        let t_grid = (0..m_t).map(|i| i as f64 / (m_t - 1) as f64).collect();
        Ok(Self::from_phi(gamma, m_t, x_max, make_x_grid(m_x, x_max), t_grid, phi))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const MAGIC: &[u8; 8] = b"MPCUTPDE";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_u64(r).map(f64::from_bits)).collect()
}
const FORMAT_VERSION: u32 = 1;

/// `P(γ) = Φ(0,0) − ½∫tγ`.
pub fn parisi_value(sol: &ParisiSolution) -> f64 {
    sol.phi00() - sol.gamma.half_t_integral()
}

/// Result of [`optimize_gamma`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: GammaStep,
    /// `P` as seen by the optimizer's evaluator.
    pub value: f64,
    pub evaluations: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Knobs for [`optimize_gamma`]; the defaults are what the CLI uses.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub dx: f64,
    pub x_max: f64,
    /// Values above this are treated as infeasible.
    pub max_value: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { dx: 1.0 / 64.0, x_max: DEFAULT_X_MAX, max_value: 200.0 }
    }
}

/// Maps unconstrained parameters to a step function. The first `m` entries
/// are square-root increments of the values; the remaining `m − 1` are logits
/// of the segment lengths (the last logit is pinned to 0).
pub fn decode_params(theta: &[f64], m: usize) -> Result<GammaStep> {
    assert_eq!(theta.len(), 2 * m - 1);
    let mut values = Vec::with_capacity(m);
    let mut acc = 0.0;
    for &s in &theta[..m] {
        acc += s * s;
        values.push(acc);
    }
    let logits: Vec<f64> = theta[m..].iter().copied().chain(std::iter::once(0.0)).collect();
    let top = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut breakpoints = vec![0.0];
    let mut t = 0.0;
    for wi in &w[..m - 1] {
        t += wi / z;
        breakpoints.push(t);
    }
    breakpoints.push(1.0);
    if breakpoints.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::param("degenerate segment"));
    }
    GammaStep::new(breakpoints, values)
}

fn encode_params(gamma: &GammaStep) -> Vec<f64> {
    let m = gamma.steps();
    let mut theta = Vec::with_capacity(2 * m - 1);
    let mut prev = 0.0;
    for &g in gamma.values() {
        theta.push((g - prev).max(0.0).sqrt());
        prev = g;
    }
    let lens: Vec<f64> = gamma.segments().map(|(a, b, _)| b - a).collect();
    let last = lens[m - 1].ln();
    theta.extend(lens[..m - 1].iter().map(|l| l.ln() - last));
    theta
}

/// Minimizes `P` over `m`-step order parameters with restarted Nelder–Mead.
pub fn optimize_gamma(m: usize, budget: usize, seed: u64) -> Result<GammaFit> {
    optimize_gamma_with(m, budget, seed, FitOptions::default())
}

pub fn optimize_gamma_with(m: usize, budget: usize, seed: u64, opts: FitOptions) -> Result<GammaFit> {
    if m == 0 {
        return Err(Error::param("need at least one step"));
    }
    if budget == 0 {
        return Err(Error::param("evaluation budget must be positive"));
    }
    let objective = |theta: &[f64]| -> f64 {
        match decode_params(theta, m) {
            Ok(g) if g.values()[m - 1] <= opts.max_value => {
                parisi_value_fast(&g, opts.dx, opts.x_max).unwrap_or(f64::INFINITY)
            }
            _ => f64::INFINITY,
        }
    };
    let zero = parisi_value_fast(&GammaStep::constant(0.0)?, opts.dx, opts.x_max)?;

    // Start from a linear ramp on equal segments.
    let ramp: Vec<f64> = (1..=m).map(|j| 0.4 + 1.6 * j as f64 / m as f64).collect();
    let equal: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let mut best_x = encode_params(&GammaStep::new(equal, ramp)?);
    let mut best_f = objective(&best_x);
    let mut evals = 1;
    let mut rng = stream(seed, Domain::Optimizer, 0);
    let mut scale = 0.5;
    while evals < budget {
        let start: Vec<f64> = best_x.iter().map(|x| x + 0.05 * scale * normal(&mut rng)).collect();
        let run = nelder_mead(&objective, &start, scale, budget - evals, 1e-10);
        evals += run.evaluations;
        if run.value < best_f {
            let gain = best_f - run.value;
            best_f = run.value;
            best_x = run.point;
            if gain < 1e-9 {
                scale *= 0.5;
            }
        } else {
            scale *= 0.5;
        }
        scale = scale.max(1e-3);
        if rng.random::<f64>() < 0.2 {
            scale = 0.5;
        }
    }
    let gamma = decode_params(&best_x, m)?;
    let mut warnings = Vec::new();
    if !(best_f < zero) {
        warnings.push(format!("no improvement over gamma = 0 (P = {zero:.6}) within {budget} evaluations"));
    }
    if m > 1 && !gamma.is_strictly_increasing() {
        warnings.push("fitted gamma is not strictly increasing".to_string());
    }
    Ok(GammaFit { gamma, value: best_f, evaluations: evals, seed, warnings })
}

/// Outcome of one Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder–Mead with dimension-adaptive coefficients. Stops after
/// `max_evals` evaluations or when the simplex values span less than `ftol`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> NmResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma_c, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut evals = 0;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        if evals >= max_evals {
            break;
        }
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < n + 1 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (point, value) = simplex.swap_remove(0);
        return NmResult { point, value, evaluations: evals };
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 <= ftol {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / nf).collect();
        let along = |c: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(m, w)| m + c * (m - w)).collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < simplex[n].1;
            let xc = if outside { along(alpha * gamma_c) } else { along(-gamma_c) };
            let fc = eval(&xc, &mut evals);
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    if evals >= max_evals {
                        break;
                    }
                    let x: Vec<f64> = best.iter().zip(&s.0).map(|(b, x)| b + delta * (x - b)).collect();
                    let v = eval(&x, &mut evals);
                    *s = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (point, value) = simplex.swap_remove(0);
    NmResult { point, value, evaluations: evals }
}

/// Euler–Maruyama trajectories of `dX = γ Φ_x(t, X) dt + dB`, `X_0 = 0`.
///
/// Positions and Brownian increments are kept in single precision: the
/// identity checks need `10^5` paths at every time step.
#[derive(Debug, Clone)]
pub struct SdePaths {
    pub h: f64,
    pub n_paths: usize,
    pub steps: usize,
    /// `x[j * n_paths + p]` is path `p` at time `j·h`.
    pub x: Vec<f32>,
    /// `db[j * n_paths + p]` is the increment over `[j·h, (j+1)·h)`.
    pub db: Vec<f32>,
    pub clamped_paths: usize,
    pub warnings: Vec<String>,
}

impl SdePaths {
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn at(&self, j: usize) -> &[f32] {
        &self.x[j * self.n_paths..(j + 1) * self.n_paths]
    }
}

pub fn simulate_sde(sol: &ParisiSolution, n_paths: usize, h: f64, seed: u64) -> Result<SdePaths> {
    if !(h > 0.0 && h <= sol.dt() + 1e-15) {
        return Err(Error::param(format!("step h = {h} exceeds the PDE time step {}", sol.dt())));
    }
    let steps = (1.0 / h).round() as usize;
    let h = 1.0 / steps as f64;
    let sqrt_h = h.sqrt();
    let x_max = sol.x_max();
    let per_path: Vec<(Vec<f32>, Vec<f32>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(seed, Domain::SdePath, p as u64);
            let mut xs = Vec::with_capacity(steps + 1);
            let mut dbs = Vec::with_capacity(steps);
            let mut x = 0.0f64;
            let mut clamped = false;
            xs.push(0.0f32);
            for j in 0..steps {
                let t = j as f64 * h;
                let (px, out) = sol.phi_x_at(t, x);
                let db = sqrt_h * normal(&mut rng);
                x += sol.gamma().at(t) * px * h + db;
                if out || x.abs() > x_max {
                    clamped = true;
                    x = x.clamp(-x_max, x_max);
                }
                xs.push(x as f32);
                dbs.push(db as f32);
            }
            (xs, dbs, clamped)
        })
        .collect();
    let mut x = vec![0f32; (steps + 1) * n_paths];
    let mut db = vec![0f32; steps * n_paths];
    let mut clamped_paths = 0;
    for (p, (xs, dbs, c)) in per_path.into_iter().enumerate() {
        for (j, v) in xs.into_iter().enumerate() {
            x[j * n_paths + p] = v;
        }
        for (j, v) in dbs.into_iter().enumerate() {
            db[j * n_paths + p] = v;
        }
        clamped_paths += usize::from(c);
    }
    let mut warnings = Vec::new();
    if clamped_paths * 100 > n_paths {
        warnings.push(format!("{clamped_paths} of {n_paths} paths left the grid"));
    }
    Ok(SdePaths { h, n_paths, steps, x, db, clamped_paths, warnings })
}

/// Monte Carlo estimates of `E[Φ_xx(t, X_t)²]` and `E[Φ_xx(t, X_t)]` on the
/// path times, plus `∫₀¹ E[Φ_xx] dt` by the trapezoid rule per path.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub times: Vec<f64>,
    pub second_moment: Vec<Estimate>,
    pub first_moment: Vec<Estimate>,
    /// `E[Φ_x(t, X_t)]`, zero for a martingale started at `Φ_x(0,0) = 0`.
    pub martingale: Vec<Estimate>,
    pub integral: Estimate,
    pub parisi_value: f64,
}

impl IdentityReport {
    /// Index of the path time closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let h = self.times[1] - self.times[0];
        ((t / h).round() as usize).min(self.times.len() - 1)
    }
}

pub fn check_identities(sol: &ParisiSolution, paths: &SdePaths) -> IdentityReport {
    let n = paths.n_paths;
    let times: Vec<f64> = (0..=paths.steps).map(|j| paths.time(j)).collect();
    let per_time: Vec<(Estimate, Estimate, Estimate)> = times
        .par_iter()
        .enumerate()
        .map(|(j, &t)| {
            let (mut m1, mut m2, mut mx) = (Moments::default(), Moments::default(), Moments::default());
            for &x in paths.at(j) {
                let a = sol.phi_xx_at(t, x as f64).0;
                m1.push(a);
                m2.push(a * a);
                mx.push(sol.phi_x_at(t, x as f64).0);
            }
            (m2.estimate(), m1.estimate(), mx.estimate())
        })
        .collect();
    let steps = paths.steps;
    let integral = (0..n)
        .into_par_iter()
        .fold(Moments::default, |mut acc, p| {
            let mut s = 0.0;
            for j in 0..=steps {
                let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
                s += w * sol.phi_xx_at(times[j], paths.x[j * n + p] as f64).0;
            }
            acc.push(s * paths.h);
            acc
        })
        .reduce(Moments::default, Moments::merge)
        .estimate();
    let (second_moment, rest): (Vec<_>, Vec<_>) = per_time.into_iter().map(|(a, b, c)| (a, (b, c))).unzip();
    let (first_moment, martingale) = rest.into_iter().unzip();
    IdentityReport {
        times,
        second_moment,
        first_moment,
        martingale,
        integral,
        parisi_value: parisi_value(sol),
    }
}
