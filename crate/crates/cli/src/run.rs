//! `mpcut run`: graphs in, cut tables out.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use mpcut::engine::{self, Schedule};
use mpcut::graph::{self, RegularGraph};
use mpcut::iamp::{self, IampSchedule, XiMode};
use mpcut::parisi::{self, GammaStep};
use mpcut::rounding::{self, CutResult, Provenance};
use mpcut::wave::{self, WaveConfig, WaveSchedule};
use mpcut::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Wave,
    Iamp,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Wave => "wave",
            Algo::Iamp => "iamp",
        }
    }
}

/// Everything a run depends on besides the seed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n: usize,
    pub k: usize,
    pub algo: Algo,
    pub mode: Mode,
    pub delta: f64,
    pub eta: f64,
    /// Wave rounds; for iamp, an explicit round count that must satisfy
    /// `L δ ≤ 1 − η`.
    pub rounds: Option<usize>,
    /// Wave eigen-index; defaults to the top mode for min-bisection and the
    /// bottom mode for max-cut.
    pub wave_mode: Option<usize>,
    pub gamma_file: Option<PathBuf>,
    pub graph_file: Option<PathBuf>,
    pub xi_mode: XiMode,
    pub xi_reps: usize,
    pub calibration_seed: u64,
    pub pde_m_t: usize,
    pub pde_m_x: usize,
    pub pde_x_max: f64,
    /// Skip the treelike scan (the column is then NaN).
    pub skip_treelike: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            k: 10,
            algo: Algo::Wave,
            mode: Mode::MaxCut,
            delta: 0.05,
            eta: 0.1,
            rounds: None,
            wave_mode: None,
            gamma_file: None,
            graph_file: None,
            xi_mode: XiMode::LargeK,
            xi_reps: iamp::DEFAULT_XI_REPS,
            calibration_seed: 1,
            pde_m_t: parisi::DEFAULT_M_T,
            pde_m_x: parisi::DEFAULT_M_X,
            pde_x_max: parisi::DEFAULT_X_MAX,
            skip_treelike: false,
        }
    }
}

pub const DEFAULT_WAVE_ROUNDS: usize = 20;

/// One CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub run_id: String,
    pub algo: String,
    pub mode: String,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub eta: f64,
    #[serde(rename = "L")]
    pub rounds: usize,
    pub seed: u64,
    pub epsilon_treelike: f64,
    pub u_value: f64,
    pub normalized_value: f64,
    pub edges_cut: u64,
    pub balance: i64,
    pub wall_ms: u128,
    pub gamma_hash: Option<String>,
    pub schedule: String,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "run_id",
    "algo",
    "mode",
    "n",
    "k",
    "delta",
    "eta",
    "L",
    "seed",
    "epsilon_treelike",
    "u_value",
    "normalized_value",
    "edges_cut",
    "balance",
    "wall_ms",
];

impl RunRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.algo,
            self.mode,
            self.n,
            self.k,
            self.delta,
            self.eta,
            self.rounds,
            self.seed,
            self.epsilon_treelike,
            self.u_value,
            self.normalized_value,
            self.edges_cut,
            self.balance,
            self.wall_ms
        )
    }
}

pub fn rows_csv(rows: &[RunRow]) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Work shared by every seed of a run: the schedule.
pub enum Prepared {
    Wave(WaveSchedule),
    Iamp(Box<IampSchedule>),
}

impl Prepared {
    pub fn rounds(&self) -> usize {
        match self {
            Prepared::Wave(s) => s.rounds(),
            Prepared::Iamp(s) => s.rounds(),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Prepared::Wave(s) => s.descriptor(),
            Prepared::Iamp(s) => s.descriptor(),
        }
    }

    pub fn gamma_hash(&self) -> Option<String> {
        match self {
            Prepared::Wave(_) => None,
            Prepared::Iamp(s) => Some(s.solution().gamma().hash_hex()),
        }
    }
}

pub fn read_gamma(path: &std::path::Path) -> Result<GammaStep> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    // Accept both a bare GammaStep and a gamma-fit report.
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let g = if v.get("gamma").is_some() { v["gamma"].clone() } else { v };
    let raw: GammaStep = serde_json::from_value(g).context("gamma file does not hold a step function")?;
    Ok(GammaStep::new(raw.breakpoints().to_vec(), raw.values().to_vec())?)
}

/// Validates the config and builds the schedule; fails before any graph work.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    if cfg.n == 0 || cfg.k < 3 || cfg.k >= cfg.n || (cfg.n * cfg.k) % 2 == 1 {
        bail!("need n > k >= 3 and n·k even (n = {}, k = {})", cfg.n, cfg.k);
    }
    if cfg.mode == Mode::MinBis && cfg.n % 2 == 1 {
        bail!("min-bisection needs even n");
    }
    match cfg.algo {
        Algo::Wave => {
            let rounds = cfg.rounds.unwrap_or(DEFAULT_WAVE_ROUNDS);
            let wcfg = match (cfg.wave_mode, cfg.mode) {
                (Some(m), _) => WaveConfig::new(rounds, m)?,
                (None, Mode::MinBis) => WaveConfig::top(rounds)?,
                (None, Mode::MaxCut) => WaveConfig::bottom(rounds)?,
            };
            Ok(Prepared::Wave(wave::make_wave_schedule(wcfg)))
        }
        Algo::Iamp => {
            let l = iamp::validate_params(cfg.delta, cfg.eta)?;
            if let Some(r) = cfg.rounds {
                if r as f64 * cfg.delta > 1.0 - cfg.eta + 1e-12 {
                    bail!("L·delta = {} exceeds 1 − eta = {}", r as f64 * cfg.delta, 1.0 - cfg.eta);
                }
                if r != l {
                    bail!("iamp uses L = floor((1 − eta)/delta) = {l}; got --L {r}");
                }
            }
            let Some(path) = &cfg.gamma_file else {
                bail!("iamp needs --gamma-file (write one with `mpcut gamma-fit`)");
            };
            let gamma = read_gamma(path)?;
            let sol = parisi::solve_pde(&gamma, cfg.pde_m_t, cfg.pde_m_x, cfg.pde_x_max)?;
            let sched = iamp::build_schedule(
                Arc::new(sol),
                cfg.delta,
                cfg.eta,
                cfg.xi_mode,
                cfg.xi_reps,
                cfg.calibration_seed,
                cfg.mode,
            )?;
            Ok(Prepared::Iamp(Box::new(sched)))
        }
    }
}

pub fn load_or_generate(cfg: &RunConfig, seed: u64) -> Result<RegularGraph> {
    let g = match &cfg.graph_file {
        Some(p) => RegularGraph::load(p)?,
        None => graph::generate_random_regular(cfg.n, cfg.k, seed)?,
    };
    if g.n() != cfg.n || g.k() != cfg.k {
        bail!("graph has n = {}, k = {} but the config says n = {}, k = {}", g.n(), g.k(), cfg.n, cfg.k);
    }
    Ok(g)
}

/// Runs the prepared schedule on `g`, rounds, and evaluates.
pub fn run_on_graph(cfg: &RunConfig, prep: &Prepared, g: &RegularGraph, seed: u64) -> Result<CutResult> {
    let (z, algo) = match prep {
        Prepared::Wave(s) => (engine::run(g, s, seed)?.z, "wave"),
        Prepared::Iamp(s) => (engine::run(g, s.as_ref(), seed)?.z, "iamp"),
    };
    let zhat = rounding::clip(&z);
    let sigma = match prep {
        Prepared::Wave(_) => rounding::sign_round(&z),
        Prepared::Iamp(_) => rounding::randomized_round(&zhat, seed),
    };
    let sigma = match cfg.mode {
        Mode::MinBis => rounding::balance_repair(&sigma, &zhat)?,
        Mode::MaxCut => sigma,
    };
    let mut cut = rounding::evaluate(g, &sigma, cfg.mode)?;
    let iamp_params = matches!(prep, Prepared::Iamp(_));
    cut.provenance = Provenance {
        algo: algo.to_string(),
        mode: cfg.mode.as_str().to_string(),
        seed,
        rounding_seed: seed,
        delta: iamp_params.then_some(cfg.delta),
        eta: iamp_params.then_some(cfg.eta),
        rounds: Some(prep.rounds()),
        gamma_hash: prep.gamma_hash(),
        schedule: prep.descriptor(),
    };
    Ok(cut)
}

fn row_for(cfg: &RunConfig, prep: &Prepared, seed: u64, eps: f64, cut: &CutResult, wall_ms: u128) -> RunRow {
    let gamma_hash = prep.gamma_hash();
    let tag = gamma_hash.as_deref().map(|h| &h[..12]).unwrap_or("none");
    let iamp_params = cfg.algo == Algo::Iamp;
    RunRow {
        run_id: format!("{}-{}-n{}-k{}-L{}-s{}-{}", cfg.algo.as_str(), cfg.mode, cfg.n, cfg.k, prep.rounds(), seed, tag),
        algo: cfg.algo.as_str().to_string(),
        mode: cfg.mode.as_str().to_string(),
        n: cfg.n,
        k: cfg.k,
        delta: if iamp_params { cfg.delta } else { 1.0 },
        eta: if iamp_params { cfg.eta } else { 0.0 },
        rounds: prep.rounds(),
        seed,
        epsilon_treelike: eps,
        u_value: cut.u_value,
        normalized_value: cut.normalized,
        edges_cut: cut.edges_cut,
        balance: cut.balance,
        wall_ms,
        gamma_hash,
        schedule: prep.descriptor(),
    }
}

/// One seed end to end.
pub fn run_seed(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<(RunRow, CutResult)> {
    let start = Instant::now();
    let g = load_or_generate(cfg, seed)?;
    let eps = if cfg.skip_treelike {
        f64::NAN
    } else {
        graph::treelike_report(&g, prep.rounds()).epsilon
    };
    let cut = run_on_graph(cfg, prep, &g, seed)?;
    let row = row_for(cfg, prep, seed, eps, &cut, start.elapsed().as_millis());
    Ok((row, cut))
}

/// All seeds, results in seed order regardless of completion order.
pub fn cmd_run(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<(RunRow, CutResult)>> {
    let prep = prepare(cfg)?;
    seeds.par_iter().map(|&s| run_seed(cfg, &prep, s)).collect()
}
