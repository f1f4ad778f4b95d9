//! Gaussian measurement log-likelihood of the cell model.
//!
//! For each dataset, `N_p` initial states are drawn and simulated forward; the
//! per-trajectory log-likelihoods are combined by log-mean-exp, and datasets
//! are summed. Any simulation failure maps to the configured floor.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{Cell, OcvCurve, Params, State};
use crate::simulator::{integrate_each, Dataset, IDENTIFICATION_SUBSTEPS};

pub const DEFAULT_FLOOR: f64 = -1e12;

/// Smallest standard deviation used by [`standardize`].
pub const STDEV_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LikelihoodError {
    #[error("invalid likelihood configuration: {0}")]
    InvalidConfig(String),
    #[error("at least {needed} finite values required, got {got}")]
    NotEnoughValues { needed: usize, got: usize },
}

/// Distribution of the initial state, centred on each dataset's nominal `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// The dataset's `x0` is exact.
    Known,
    /// Independent Gaussian perturbations with the given per-component variances.
    Gaussian { variance: [f64; 4] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    /// Number of sampled initial states per dataset.
    pub n_samples: usize,
    pub initial_state: InitialState,
    pub floor: f64,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    /// Seed for initial-state sampling; fixed so the objective is deterministic in θ.
    pub seed: u64,
    pub t_ref: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        LikelihoodConfig {
            n_samples: 1,
            initial_state: InitialState::Known,
            floor: DEFAULT_FLOOR,
            substeps: IDENTIFICATION_SUBSTEPS,
            seed: 0,
            t_ref: crate::battery::DEFAULT_T_REF,
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<(), LikelihoodError> {
        let bad = |m: &str| Err(LikelihoodError::InvalidConfig(m.into()));
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1");
        }
        if self.n_samples != 1 && self.initial_state == InitialState::Known {
            return bad("a known initial state requires n_samples = 1");
        }
        if let InitialState::Gaussian { variance } = self.initial_state {
            if variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad("initial-state variances must be finite and non-negative");
            }
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        if !self.floor.is_finite() {
            return bad("floor must be finite");
        }
        if !(self.t_ref > 0.0) {
            return bad("reference temperature must be positive");
        }
        Ok(())
    }
}

/// `ln(mean(exp(values)))`, stable for any finite inputs. `-inf` entries are
/// allowed and contribute nothing.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + (s.ln() - (values.len() as f64).ln())
}

/// Log-likelihood of one trajectory started from `x0`, or `None` if the
/// simulation fails.
fn trajectory_log_likelihood(
    cell: &Cell<'_>,
    data: &Dataset,
    x0: &State,
    substeps: usize,
) -> Option<f64> {
    let (r_v, r_t) = (data.noise.r_v, data.noise.r_t);
    let mut weighted = 0.0;
    let mut failed = false;
    let run = integrate_each(cell, x0, &data.profile, substeps, |k, x| {
        match cell.output(x, &data.profile.input(k)) {
            Ok(o) => {
                let ev = data.y_v[k] - o.voltage;
                let et = data.y_t[k] - o.t_surf;
                weighted += ev * ev / r_v + et * et / r_t;
            }
            Err(_) => failed = true,
        }
    });
    if run.is_err() || failed {
        return None;
    }
    let n = data.len() as f64;
    let ll = -0.5 * (weighted + n * ((2.0 * PI * r_v).ln() + (2.0 * PI * r_t).ln()));
    ll.is_finite().then_some(ll)
}

/// Initial states for one dataset; deterministic given the config seed and the
/// dataset index.
fn initial_states(data: &Dataset, index: usize, cfg: &LikelihoodConfig) -> Vec<State> {
    match cfg.initial_state {
        InitialState::Known => vec![data.x0],
        InitialState::Gaussian { variance } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(index as u64);
            let sd = variance.map(f64::sqrt);
            let mean = data.x0.to_array();
            (0..cfg.n_samples)
                .map(|_| {
                    let mut x = mean;
                    for (xi, s) in x.iter_mut().zip(sd) {
                        let z: f64 = rng.sample(StandardNormal);
                        *xi += s * z;
                    }
                    State::from_array(x)
                })
                .collect()
        }
    }
}

/// Log-likelihood of a single dataset (no floor applied; `-inf` on failure).
pub fn dataset_log_likelihood(
    cell: &Cell<'_>,
    data: &Dataset,
    index: usize,
    cfg: &LikelihoodConfig,
) -> f64 {
    let per_sample: Vec<f64> = initial_states(data, index, cfg)
        .iter()
        .map(|x0| {
            trajectory_log_likelihood(cell, data, x0, cfg.substeps).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    log_mean_exp(&per_sample)
}

/// `L(θ)` summed over `datasets`, clamped below at `cfg.floor`.
pub fn log_likelihood(
    params: &Params,
    ocv: &OcvCurve,
    datasets: &[Dataset],
    cfg: &LikelihoodConfig,
) -> Result<f64, LikelihoodError> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(LikelihoodError::InvalidConfig("no datasets".into()));
    }
    if params.validate().is_err() {
        return Ok(cfg.floor);
    }
    let cell = Cell::new(params, ocv, cfg.t_ref);
    let mut total = 0.0;
    for (m, data) in datasets.iter().enumerate() {
        total += dataset_log_likelihood(&cell, data, m, cfg);
        if !(total > cfg.floor) {
            return Ok(cfg.floor);
        }
    }
    Ok(total)
}

/// Upper bound of the log-likelihood: its value at zero residuals.
pub fn zero_residual_log_likelihood(datasets: &[Dataset]) -> f64 {
    datasets
        .iter()
        .map(|d| {
            -0.5 * d.len() as f64 * ((2.0 * PI * d.noise.r_v).ln() + (2.0 * PI * d.noise.r_t).ln())
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub values: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
}

impl Standardized {
    pub fn unstandardize(&self, z: f64) -> f64 {
        self.mean + self.stdev * z
    }

    pub fn standardize_value(&self, v: f64) -> f64 {
        (v - self.mean) / self.stdev
    }
}

/// Zero-mean, unit-variance rescaling (population standard deviation).
pub fn standardize(values: &[f64]) -> Result<Standardized, LikelihoodError> {
    if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
        return Err(LikelihoodError::NotEnoughValues {
            needed: 2,
            got: values.iter().filter(|v| v.is_finite()).count(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let stdev = var.sqrt().max(STDEV_FLOOR);
    let values = values.iter().map(|v| (v - mean) / stdev).collect();
    Ok(Standardized {
        values,
        mean,
        stdev,
    })
}
