//! SIR-with-latency diffusion over a contact list.
//!
//! An individual infected at time `tau` is latent (infected, not spreading)
//! on `[tau, tau + mu_is)`, spreading on `[tau + mu_is, tau + mu_r)` and
//! recovered afterwards. A contact transmits at its start time only: if one
//! endpoint is spreading and the other susceptible there, the susceptible one
//! gets infected with probability `p_inf`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{Contact, PersonId};
use crate::rng;

/// Parameters of the diffusion model.
///
/// `p_init_overrides` optionally assigns a per-individual initial-infection
/// probability; the Monte-Carlo simulator and the enumeration oracle honor
/// it, while the network estimators work with the scalar `p_init`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    /// Latency from infection to spreading, seconds.
    pub mu_is_s: i64,
    /// Time from infection to recovery, seconds.
    pub mu_r_s: i64,
    /// Per-contact transmission probability.
    pub p_inf: f64,
    /// Initial-infection probability at time zero.
    pub p_init: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_init_overrides: Option<HashMap<u32, f64>>,
    /// Maximum co-location distance, meters.
    pub d_max_m: f64,
    /// Minimum co-location duration, seconds.
    pub t_min_s: i64,
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_is_s > 0 && self.mu_r_s > self.mu_is_s) {
            return Err(Error::invalid("require 0 < mu_is < mu_r"));
        }
        for (name, p) in [("p_inf", self.p_inf), ("p_init", self.p_init)] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if let Some(map) = &self.p_init_overrides {
            if map.values().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::invalid("p_init override must be in [0, 1]"));
            }
        }
        if !(self.d_max_m > 0.0) || !self.d_max_m.is_finite() {
            return Err(Error::invalid("d_max must be positive"));
        }
        if self.t_min_s < 0 {
            return Err(Error::invalid("t_min must be non-negative"));
        }
        Ok(())
    }

    pub fn p_init_for(&self, person: PersonId) -> f64 {
        self.p_init_overrides
            .as_ref()
            .and_then(|m| m.get(&person.0).copied())
            .unwrap_or(self.p_init)
    }
}

/// Health compartment at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Susceptible,
    /// Infected, not yet spreading.
    Latent,
    /// Infected and spreading.
    Spreading,
    Recovered,
}

/// Status of an individual with the given infection time at time `t`.
pub fn status_at(infection_time: Option<i64>, t: i64, params: &DiffusionParams) -> Status {
    match infection_time {
        None => Status::Susceptible,
        Some(tau) if t < tau => Status::Susceptible,
        Some(tau) if t < tau + params.mu_is_s => Status::Latent,
        Some(tau) if t < tau + params.mu_r_s => Status::Spreading,
        Some(_) => Status::Recovered,
    }
}

/// Infection history of one individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthTimeline {
    pub person: PersonId,
    /// Absent for individuals that never got infected; 0 for initial ones.
    pub infection_time: Option<i64>,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    /// One timeline per node, in the node order passed to the simulator.
    pub timelines: Vec<HealthTimeline>,
}

impl SimulationResult {
    /// Number of individuals infected at or before `t`.
    pub fn cumulative_at(&self, t: i64) -> usize {
        self.timelines
            .iter()
            .filter(|h| matches!(h.infection_time, Some(tau) if tau <= t))
            .count()
    }

    /// Cumulative infected counts on an evaluation grid.
    pub fn cumulative_series(&self, grid: &[i64]) -> Vec<usize> {
        grid.iter().map(|&t| self.cumulative_at(t)).collect()
    }

    /// (susceptible, latent, spreading, recovered) counts at time `t`.
    pub fn status_counts_at(&self, t: i64, params: &DiffusionParams) -> (usize, usize, usize, usize) {
        let mut counts = (0, 0, 0, 0);
        for h in &self.timelines {
            match status_at(h.infection_time, t, params) {
                Status::Susceptible => counts.0 += 1,
                Status::Latent => counts.1 += 1,
                Status::Spreading => counts.2 += 1,
                Status::Recovered => counts.3 += 1,
            }
        }
        counts
    }
}

fn sorted_contact_indices(contacts: &[Contact]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..contacts.len()).collect();
    idx.sort_by_key(|&i| {
        let c = &contacts[i];
        (c.start, c.pair.a.0, c.pair.b.0, c.end)
    });
    idx
}

/// Replays the deterministic state machine for one realization of the
/// initial-infection vector and the per-contact transmission coins.
///
/// `transmit(j)` is consulted for the j-th contact in chronological
/// (start, pair) order, and only when that contact is transmission-eligible.
/// Simultaneous contacts are applied in pair-lexicographic order; an
/// individual infected at time t is latent at t and cannot forward at the
/// same instant.
fn replay(
    contacts: &[Contact],
    order: &[usize],
    node_index: &HashMap<PersonId, usize>,
    initially_infected: &[bool],
    params: &DiffusionParams,
    mut transmit: impl FnMut(usize) -> bool,
) -> Vec<Option<i64>> {
    let mut infection: Vec<Option<i64>> = initially_infected
        .iter()
        .map(|&b| if b { Some(0) } else { None })
        .collect();

    for (j, &ci) in order.iter().enumerate() {
        let c = &contacts[ci];
        let (ia, ib) = (node_index[&c.pair.a], node_index[&c.pair.b]);
        let t1 = c.start;
        let sa = status_at(infection[ia], t1, params);
        let sb = status_at(infection[ib], t1, params);
        let target = match (sa, sb) {
            (Status::Spreading, Status::Susceptible) => Some(ib),
            (Status::Susceptible, Status::Spreading) => Some(ia),
            _ => None,
        };
        if let Some(target) = target {
            if transmit(j) {
                infection[target] = Some(t1);
            }
        }
    }
    infection
}

fn build_node_index(node_ids: &[PersonId]) -> Result<HashMap<PersonId, usize>> {
    let mut index = HashMap::with_capacity(node_ids.len());
    for (i, &id) in node_ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(Error::invalid(format!("duplicate node id {id}")));
        }
    }
    Ok(index)
}

/// Runs one seeded Monte-Carlo realization of the diffusion.
///
/// Initial infections are Bernoulli(p_init) per node; every contact has a
/// dedicated uniform draw derived from (seed, contact position), so two runs
/// with the same seed and different `p_inf` share their randomness.
pub fn simulate_once(
    contacts: &[Contact],
    node_ids: &[PersonId],
    params: &DiffusionParams,
    seed: u64,
) -> Result<SimulationResult> {
    params.validate()?;
    let index = build_node_index(node_ids)?;
    for c in contacts {
        if !index.contains_key(&c.pair.a) || !index.contains_key(&c.pair.b) {
            return Err(Error::UnknownPerson(c.pair.a.0));
        }
    }
    let order = sorted_contact_indices(contacts);

    let initially_infected: Vec<bool> = node_ids
        .iter()
        .map(|&id| rng::uniform(seed, rng::tag::INIT_INFECTION, id.0 as u64) < params.p_init_for(id))
        .collect();

    let infection = replay(contacts, &order, &index, &initially_infected, params, |j| {
        rng::uniform(seed, rng::tag::CONTACT_COIN, j as u64) < params.p_inf
    });

    Ok(SimulationResult {
        timelines: node_ids
            .iter()
            .zip(infection)
            .map(|(&person, infection_time)| HealthTimeline { person, infection_time })
            .collect(),
    })
}

/// Mean and standard deviation of the cumulative infected count across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub grid: Vec<i64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation across runs (0 when r = 1).
    pub std: Vec<f64>,
    pub runs: usize,
}

/// Averages `r` independent simulation runs on the evaluation grid.
pub fn ground_truth(
    contacts: &[Contact],
    node_ids: &[PersonId],
    params: &DiffusionParams,
    r: usize,
    master_seed: u64,
    grid: &[i64],
) -> Result<GroundTruth> {
    if r < 1 {
        return Err(Error::invalid("ground truth needs at least one run"));
    }
    let series: Vec<Vec<usize>> = (0..r)
        .into_par_iter()
        .map(|i| {
            let seed = rng::mix(master_seed, rng::tag::RUN, i as u64);
            simulate_once(contacts, node_ids, params, seed).map(|res| res.cumulative_series(grid))
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![0.0; grid.len()];
    let mut std = vec![0.0; grid.len()];
    for (k, m) in mean.iter_mut().enumerate() {
        *m = series.iter().map(|s| s[k] as f64).sum::<f64>() / r as f64;
    }
    if r > 1 {
        for (k, s) in std.iter_mut().enumerate() {
            let var = series
                .iter()
                .map(|run| (run[k] as f64 - mean[k]).powi(2))
                .sum::<f64>()
                / (r - 1) as f64;
            *s = var.sqrt();
        }
    }
    Ok(GroundTruth { grid: grid.to_vec(), mean, std, runs: r })
}

/// Exact per-node infection probabilities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactInfection {
    /// Aligned with the node order given to [`enumerate_exact`].
    pub p_infected: Vec<f64>,
    pub expected_count: f64,
}

/// Guard: enumeration is refused beyond 2^MAX_ENUM_BITS worlds.
pub const MAX_ENUM_BITS: usize = 22;

/// Exhaustively enumerates every initial-infection vector and every
/// per-contact coin outcome, weighting each world by its probability.
///
/// This is the independent oracle the Monte-Carlo simulator and the path
/// estimators are checked against; it shares only the state-machine replay.
pub fn enumerate_exact(
    contacts: &[Contact],
    node_ids: &[PersonId],
    params: &DiffusionParams,
    t: i64,
) -> Result<ExactInfection> {
    params.validate()?;
    let n = node_ids.len();
    let m = contacts.len();
    if n + m > MAX_ENUM_BITS {
        return Err(Error::InstanceTooLarge { nodes: n, contacts: m });
    }
    let index = build_node_index(node_ids)?;
    let order = sorted_contact_indices(contacts);

    let p_init: Vec<f64> = node_ids.iter().map(|&id| params.p_init_for(id)).collect();

    let mut p_infected = vec![0.0f64; n];
    for init_mask in 0u64..(1 << n) {
        let mut w_init = 1.0;
        let mut initially: Vec<bool> = Vec::with_capacity(n);
        for (i, &p) in p_init.iter().enumerate() {
            let bit = init_mask >> i & 1 == 1;
            w_init *= if bit { p } else { 1.0 - p };
            initially.push(bit);
        }
        if w_init == 0.0 {
            continue;
        }
        for coin_mask in 0u64..(1 << m) {
            // Summing over both outcomes of a coin the replay never consults
            // marginalizes it out, so weighting by the full product is exact.
            let mut w = w_init;
            for j in 0..m {
                w *= if coin_mask >> j & 1 == 1 { params.p_inf } else { 1.0 - params.p_inf };
            }
            if w == 0.0 {
                continue;
            }
            let infection = replay(contacts, &order, &index, &initially, params, |j| {
                coin_mask >> j & 1 == 1
            });
            for (i, inf) in infection.iter().enumerate() {
                if matches!(inf, Some(tau) if *tau <= t) {
                    p_infected[i] += w;
                }
            }
        }
    }
    let expected_count = p_infected.iter().sum();
    Ok(ExactInfection { p_infected, expected_count })
}
