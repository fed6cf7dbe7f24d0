//! Batch front end for `mpcut`: fit γ, solve the PDE, run algorithms over
//! seeded graph ensembles, check against exact optima and run diagnostics.

pub mod config;
pub mod diag;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mpcut::iamp::XiMode;
use mpcut::Mode;

pub const WORKERS_ENV: &str = "MPCUT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mpcut", version, about = "Local message passing for Max-Cut and Min-Bisection")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Output table format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a step order parameter by minimizing the Parisi functional.
    GammaFit(GammaFitArgs),
    /// Solve the zero-temperature PDE for a γ file and store the grid.
    PdeSolve(PdeSolveArgs),
    /// Run an algorithm over seeded random regular graphs.
    Run(RunArgs),
    /// Exact optimum of a small graph plus a sanity bound on the wave cut.
    Oracle(OracleArgs),
    /// Tree-level diagnostics; exits nonzero if any check fails.
    Diag(DiagArgs),
    /// Time message-passing rounds.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GammaFitArgs {
    /// Number of steps.
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Objective evaluations.
    #[arg(long, default_value_t = 5000)]
    pub budget: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Where to write the fit (JSON).
    #[arg(long, default_value = "gamma.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PdeSolveArgs {
    #[arg(long)]
    pub gamma_file: PathBuf,
    #[arg(long, default_value_t = mpcut::parisi::DEFAULT_M_T)]
    pub m_t: usize,
    #[arg(long, default_value_t = mpcut::parisi::DEFAULT_M_X)]
    pub m_x: usize,
    #[arg(long, default_value_t = mpcut::parisi::DEFAULT_X_MAX)]
    pub x_max: f64,
    /// Where to write the binary grid.
    #[arg(long, default_value = "phi.bin")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Single seed; ignored when --seeds is given.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seed list: `1,2,5`, `1..11` or `1..=10`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, value_enum, default_value = "wave")]
    pub algo: run::Algo,
    #[arg(long, default_value = "maxcut")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Rounds (wave; for iamp it must equal floor((1 − eta)/delta)).
    #[arg(long = "L")]
    pub rounds: Option<usize>,
    /// Wave eigen-index in 1..=L.
    #[arg(long)]
    pub wave_mode: Option<usize>,
    #[arg(long)]
    pub gamma_file: Option<PathBuf>,
    /// Edge-list file instead of a generated graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// `large-k` or `finite-k:K`.
    #[arg(long, default_value = "large-k", value_parser = parse_xi_mode)]
    pub xi_mode: XiMode,
    #[arg(long, default_value_t = mpcut::iamp::DEFAULT_XI_REPS)]
    pub xi_reps: usize,
    /// Skip the treelike scan of each instance.
    #[arg(long)]
    pub skip_treelike: bool,
    /// Directory for per-seed ±1 vectors.
    #[arg(long)]
    pub sigma_dir: Option<PathBuf>,
    /// Results table (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Edge-list file; otherwise a random graph from --n, --k, --seed.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "maxcut")]
    pub mode: Mode,
    /// Wave rounds for the sanity-bounded cut.
    #[arg(long = "L", default_value_t = 5)]
    pub rounds: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long)]
    pub gamma_file: PathBuf,
    /// Comma-separated subset of checks (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub checks: Vec<diag::Check>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Degree for the normalization and ξ checks.
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    #[arg(long, default_value_t = 20_000)]
    pub pool: usize,
    #[arg(long, default_value_t = 2000)]
    pub clt_k: usize,
    #[arg(long, default_value_t = 10_000)]
    pub clt_samples: usize,
    #[arg(long, default_value_t = 10_000)]
    pub tree_reps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub sde_paths: usize,
    #[arg(long, default_value_t = 0.05)]
    pub identity_tol: f64,
    /// Scale every edge coefficient by this factor (sensitivity canary).
    #[arg(long)]
    pub inject_misnormalization: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long = "L", default_value_t = 20)]
    pub rounds: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_xi_mode(s: &str) -> Result<XiMode, String> {
    let s = s.trim().to_ascii_lowercase().replace('_', "-");
    if s == "large-k" {
        return Ok(XiMode::LargeK);
    }
    if let Some(k) = s.strip_prefix("finite-k:") {
        return k.parse().map(XiMode::FiniteK).map_err(|e| format!("bad degree in {s:?}: {e}"));
    }
    Err(format!("expected large-k or finite-k:K, got {s:?}"))
}

impl RunArgs {
    pub fn to_config(&self) -> run::RunConfig {
        run::RunConfig {
            n: self.n,
            k: self.k,
            algo: self.algo,
            mode: self.mode,
            delta: self.delta,
            eta: self.eta,
            rounds: self.rounds,
            wave_mode: self.wave_mode,
            gamma_file: self.gamma_file.clone(),
            graph_file: self.graph.clone(),
            xi_mode: self.xi_mode,
            xi_reps: self.xi_reps,
            skip_treelike: self.skip_treelike,
            ..Default::default()
        }
    }

    pub fn seed_list(&self) -> anyhow::Result<Vec<u64>> {
        match &self.seeds {
            Some(s) => config::parse_seeds(s),
            None => Ok(vec![self.seed]),
        }
    }
}

impl DiagArgs {
    pub fn to_config(&self) -> diag::DiagConfig {
        diag::DiagConfig {
            checks: if self.checks.is_empty() { diag::Check::ALL.to_vec() } else { self.checks.clone() },
            seed: self.seed,
            delta: self.delta,
            eta: self.eta,
            k: self.k,
            pool: self.pool,
            clt_k: self.clt_k,
            clt_samples: self.clt_samples,
            tree_reps: self.tree_reps,
            sde_paths: self.sde_paths,
            identity_tol: self.identity_tol,
            inject_misnormalization: self.inject_misnormalization,
            ..Default::default()
        }
    }
}
