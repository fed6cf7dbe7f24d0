//! Local message-passing algorithms for Max-Cut and Min-Bisection on
//! locally treelike k-regular graphs.
//!
//! The pipeline: fit a step order parameter with [`parisi::optimize_gamma`],
//! solve the zero-temperature PDE with [`parisi::solve_pde`], turn the
//! solution into an [`iamp::IampSchedule`], run it on a graph with
//! [`engine::run`], then round with [`rounding`]. The Gaussian-wave baseline
//! in [`wave`] plugs into the same engine.

pub mod engine;
pub mod error;
pub mod graph;
pub mod iamp;
pub mod oracle;
pub mod parisi;
pub mod rng;
pub mod rounding;
pub mod stats;
pub mod wave;

pub use error::{Error, Result};
pub use graph::RegularGraph;

/// Which objective a run targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Maximize the number of cut edges, i.e. minimize `U`.
    MaxCut,
    /// Minimize the cut over balanced partitions, i.e. maximize `U` with `sum(sigma) = 0`.
    MinBis,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MaxCut => "maxcut",
            Mode::MinBis => "minbis",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxcut" | "max-cut" => Ok(Mode::MaxCut),
            "minbis" | "min-bis" | "minbisection" => Ok(Mode::MinBis),
            other => Err(Error::param(format!("unknown mode {other:?}"))),
        }
    }
}
