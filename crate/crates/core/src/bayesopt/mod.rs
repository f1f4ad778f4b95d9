//! Bayesian optimization of a black-box objective over a box, with the search
//! region shrunk between rounds to the minimum-volume ellipsoid around the
//! best points found so far.

mod acquisition;
mod region;
mod run;
mod space;
mod trace;

pub use acquisition::{expected_improvement, normal_cdf, normal_pdf};
pub use region::{mvee, Ellipsoid, Region, MIN_SEMI_AXIS};
pub use run::{propose_next, run_identification, Observation, OptRun, Proposal};
pub use space::{latin_hypercube, SearchBox, POSITIVE_LIFT};
pub use trace::{write_regions_csv, write_trace_csv};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpError, HyperSearch, Kernel};

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid search box: {0}")]
    InvalidBox(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("search region has no volume inside the box ({draws} draws accepted none)")]
    DegenerateRegion { draws: usize },
    #[error("objective returned {value} at iteration {iteration}")]
    NonFiniteObjective { iteration: usize, value: f64 },
    #[error("surrogate model: {0}")]
    Gp(#[from] GpError),
    #[error("writing trace: {0}")]
    Csv(#[from] csv::Error),
}

/// Monotone transform applied to objective values before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetWarp {
    Identity,
    /// `-ln(1 + L* - L)` with `L*` the best value so far. Compresses the very
    /// long lower tail of a log-likelihood while keeping the ordering.
    #[default]
    LogGap,
}

impl TargetWarp {
    pub fn apply(self, values: &[f64]) -> Vec<f64> {
        match self {
            TargetWarp::Identity => values.to_vec(),
            TargetWarp::LogGap => {
                let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                values.iter().map(|v| -(best - v).ln_1p()).collect()
            }
        }
    }
}

/// Round structure and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub iterations_per_round: usize,
    pub n_rounds: usize,
    /// Latin-hypercube points evaluated first; they count toward round 0.
    pub n_initial: usize,
    /// Number of best distinct points enclosing each new region.
    pub tau: usize,
    /// When false the region stays the full box for the whole run.
    pub shrink: bool,
    /// Random candidates scored by expected improvement per iteration.
    pub candidates: usize,
    /// Extra candidates drawn as Gaussian perturbations of the best points;
    /// none by default.
    pub local_candidates: usize,
    /// Number of best distinct points the local candidates are drawn around.
    pub local_centers: usize,
    /// Perturbation scales as fractions of the region's bounding-box widths.
    pub local_scales: Vec<f64>,
    /// Surrogate evaluations spent polishing the best candidate.
    pub polish_evals: usize,
    /// Hyperparameters are re-optimized after this many new observations.
    pub refit_every: usize,
    pub mvee_tol: f64,
    pub kernel: Kernel,
    pub warp: TargetWarp,
    pub hyper_search: HyperSearch,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            iterations_per_round: 200,
            n_rounds: 4,
            n_initial: 50,
            tau: 20,
            shrink: true,
            candidates: 4096,
            local_candidates: 0,
            local_centers: 5,
            local_scales: vec![0.1, 0.03, 0.01],
            polish_evals: 50,
            refit_every: 10,
            mvee_tol: 1e-6,
            kernel: Kernel::Matern52,
            warp: TargetWarp::LogGap,
            hyper_search: HyperSearch::default(),
        }
    }
}

impl Schedule {
    pub fn total_evaluations(&self) -> usize {
        self.iterations_per_round * self.n_rounds
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |msg: String| Err(OptError::InvalidSchedule(msg));
        if self.n_rounds == 0 || self.iterations_per_round == 0 {
            return bad("need at least one round of at least one iteration".into());
        }
        if self.n_initial < 2 || self.n_initial > self.iterations_per_round {
            return bad(format!(
                "n_initial must be in [2, iterations_per_round = {}], got {}",
                self.iterations_per_round, self.n_initial
            ));
        }
        if self.shrink
            && self.n_rounds > 1
            && (self.tau < 2 || self.tau > self.iterations_per_round)
        {
            return bad(format!(
                "tau must be in [2, iterations_per_round = {}], got {}",
                self.iterations_per_round, self.tau
            ));
        }
        if self.candidates == 0 || self.refit_every == 0 {
            return bad("candidates and refit_every must be positive".into());
        }
        if !(self.mvee_tol > 0.0) {
            return bad(format!("mvee_tol must be positive, got {}", self.mvee_tol));
        }
        Ok(())
    }
}
