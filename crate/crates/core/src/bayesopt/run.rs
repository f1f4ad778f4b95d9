//! Acquisition maximization and the round-based optimization loop.

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::acquisition::expected_improvement;
use super::region::{mvee, Region};
use super::space::{latin_hypercube, SearchBox};
use super::{OptError, Schedule};
use crate::gp::{GpModel, HyperPolicy, HyperSearch, Hyperparameters};
use crate::likelihood::standardize;
use crate::optim::nelder_mead;

const LHS_STREAM: u64 = 0;
const PROPOSAL_STREAM: u64 = 1;

/// Largest coordinate difference under which two points count as the same.
const DISTINCT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub z: Vec<f64>,
    pub ei: f64,
    /// Best expected improvement among the random candidates, before polishing.
    pub best_candidate_ei: f64,
}

fn ei_at(model: &GpModel, z: &[f64], l_star: f64) -> f64 {
    let (mu, var) = model.posterior(z);
    expected_improvement(mu, var.sqrt(), l_star)
}

/// Maximizes expected improvement over `region`: scores `budget` uniform
/// candidates plus any `extra` ones, then polishes the best with a simplex
/// search that stays in the region.
pub fn propose_next<R: Rng>(
    model: &GpModel,
    region: &Region,
    l_star: f64,
    budget: usize,
    extra: &[Vec<f64>],
    polish_evals: usize,
    rng: &mut R,
) -> Result<Proposal, OptError> {
    let mut candidates = region.sample(budget, rng)?;
    candidates.extend(extra.iter().filter(|z| region.contains(z)).cloned());
    let (best_idx, best_ei) = model
        .posterior_batch(&candidates)
        .into_iter()
        .map(|(mu, var)| expected_improvement(mu, var.sqrt(), l_star))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, ei)| {
            if ei > best.1 {
                (i, ei)
            } else {
                best
            }
        });
    let anchor = candidates[best_idx].clone();
    if polish_evals == 0 {
        return Ok(Proposal {
            z: anchor,
            ei: best_ei,
            best_candidate_ei: best_ei,
        });
    }

    let step: Vec<f64> = region
        .bounding_box()
        .iter()
        .map(|(lo, hi)| (0.02 * (hi - lo)).max(1e-4))
        .collect();
    let polished = nelder_mead(
        |z| -ei_at(model, &region.project_from(&anchor, z), l_star),
        &anchor,
        &step,
        polish_evals,
    );
    let z = region.project_from(&anchor, &polished.x);
    let ei = ei_at(model, &z, l_star);
    if ei > best_ei {
        Ok(Proposal {
            z,
            ei,
            best_candidate_ei: best_ei,
        })
    } else {
        Ok(Proposal {
            z: anchor,
            ei: best_ei,
            best_candidate_ei: best_ei,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub iteration: usize,
    pub round: usize,
    /// Index into [`OptRun::rounds`] of the region active when proposed.
    pub region: usize,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct OptRun {
    pub search_box: SearchBox,
    pub schedule: Schedule,
    pub seed: u64,
    pub history: Vec<Observation>,
    /// One region per round; a single full-box entry when shrinking is off.
    pub rounds: Vec<Region>,
    incumbent: usize,
    pub hyperparameters: Option<Hyperparameters>,
}

impl OptRun {
    pub fn incumbent(&self) -> &Observation {
        &self.history[self.incumbent]
    }

    /// Best value seen after each iteration.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |best, o| {
                *best = best.max(o.value);
                Some(*best)
            })
            .collect()
    }
}

/// The `tau` best observations with pairwise distinct inputs.
fn best_distinct(history: &[Observation], tau: usize) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| {
        history[b]
            .value
            .total_cmp(&history[a].value)
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(tau);
    for i in order {
        let z = &history[i].z;
        if chosen
            .iter()
            .all(|c| c.iter().zip(z).any(|(a, b)| (a - b).abs() > DISTINCT_TOL))
        {
            chosen.push(z.clone());
            if chosen.len() == tau {
                break;
            }
        }
    }
    chosen
}

fn next_region(history: &[Observation], schedule: &Schedule) -> Result<Region, OptError> {
    let best = best_distinct(history, schedule.tau);
    let e = mvee(&best, schedule.mvee_tol)?;
    Ok(Region::Ellipsoid(e))
}

/// Maximizes `objective` over `search_box`.
///
/// The first `n_initial` evaluations are a Latin-hypercube design; each later
/// one maximizes expected improvement under a GP fitted to all observations.
/// At every round boundary the region becomes the minimum-volume ellipsoid of
/// the `tau` best distinct points, intersected with the box.
pub fn run_identification<F>(
    mut objective: F,
    search_box: &SearchBox,
    schedule: &Schedule,
    seed: u64,
) -> Result<OptRun, OptError>
where
    F: FnMut(&[f64]) -> f64,
{
    schedule.validate()?;
    let dim = search_box.dim();
    let mut lhs_rng = ChaCha8Rng::seed_from_u64(seed);
    lhs_rng.set_stream(LHS_STREAM);
    let mut proposal_rng = ChaCha8Rng::seed_from_u64(seed);
    proposal_rng.set_stream(PROPOSAL_STREAM);

    let design = latin_hypercube(schedule.n_initial, dim, &mut lhs_rng);
    let mut rounds = vec![Region::FullBox { dim }];
    let mut active = 0usize;
    let mut history: Vec<Observation> = Vec::with_capacity(schedule.total_evaluations());
    let mut incumbent = 0usize;
    let mut hyper: Option<Hyperparameters> = None;
    let mut last_refit = 0usize;
    let mut refits = 0u64;

    for iteration in 0..schedule.total_evaluations() {
        let round = iteration / schedule.iterations_per_round;
        if schedule.shrink && round > 0 && round == rounds.len() {
            let region = match next_region(&history, schedule) {
                Ok(r) => r,
                Err(e) => {
                    warn!("round {round}: could not build a new region ({e}); keeping the previous one");
                    rounds[active].clone()
                }
            };
            rounds.push(region);
            active = rounds.len() - 1;
            let bb = rounds[active].bounding_box();
            info!(
                "round {round}: incumbent {:.6}, mean bounding-box width {:.4}",
                history[incumbent].value,
                bb.iter().map(|(l, h)| h - l).sum::<f64>() / dim as f64
            );
        }

        let z = if iteration < schedule.n_initial {
            design[iteration].clone()
        } else {
            let inputs: Vec<Vec<f64>> = history.iter().map(|o| o.z.clone()).collect();
            let values: Vec<f64> = history.iter().map(|o| o.value).collect();
            let std = standardize(&schedule.warp.apply(&values)).map_err(|e| {
                OptError::InvalidSchedule(format!("cannot standardize targets: {e}"))
            })?;
            let policy = match &hyper {
                Some(h) if history.len() - last_refit < schedule.refit_every => {
                    HyperPolicy::Fixed(h.clone())
                }
                _ => {
                    last_refit = history.len();
                    refits += 1;
                    let search = HyperSearch {
                        seed: seed
                            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                            .wrapping_add(refits),
                        ..schedule.hyper_search.clone()
                    };
                    HyperPolicy::Optimize {
                        search,
                        warm_start: hyper.clone(),
                    }
                }
            };
            let model = GpModel::fit(schedule.kernel, &inputs, &std.values, &policy)?;
            hyper = Some(model.hyperparameters().clone());
            let l_star = std.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let centers = best_distinct(&history, schedule.local_centers);
            let extra = rounds[active].sample_near(
                &centers,
                schedule.local_candidates,
                &schedule.local_scales,
                &mut proposal_rng,
            );
            let proposal = match propose_next(
                &model,
                &rounds[active],
                l_star,
                schedule.candidates,
                &extra,
                schedule.polish_evals,
                &mut proposal_rng,
            ) {
                Ok(p) => p,
                Err(OptError::DegenerateRegion { draws }) if active > 0 => {
                    warn!("iteration {iteration}: region {active} is degenerate after {draws} draws; reverting");
                    let previous = rounds[active - 1].clone();
                    rounds[active] = previous;
                    let extra = rounds[active].sample_near(
                        &centers,
                        schedule.local_candidates,
                        &schedule.local_scales,
                        &mut proposal_rng,
                    );
                    propose_next(
                        &model,
                        &rounds[active],
                        l_star,
                        schedule.candidates,
                        &extra,
                        schedule.polish_evals,
                        &mut proposal_rng,
                    )?
                }
                Err(e) => return Err(e),
            };
            proposal.z
        };

        let theta = search_box.denormalize(&z);
        let value = objective(&theta);
        if !value.is_finite() {
            return Err(OptError::NonFiniteObjective { iteration, value });
        }
        if history.is_empty() || value > history[incumbent].value {
            incumbent = history.len();
        }
        debug!(
            "iteration {iteration}: L = {value:.6}, incumbent {:.6}",
            history.get(incumbent).map_or(value, |o| o.value)
        );
        history.push(Observation {
            iteration,
            round,
            region: active,
            theta,
            z,
            value,
        });
    }

    Ok(OptRun {
        search_box: search_box.clone(),
        schedule: schedule.clone(),
        seed,
        history,
        rounds,
        incumbent,
        hyperparameters: hyper,
    })
}
