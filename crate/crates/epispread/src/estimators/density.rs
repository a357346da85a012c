//! Visit-density baseline: model the unobserved population's visits with a
//! per-target spatiotemporal histogram and convert visit density into
//! co-location probability.
//!
//! Space is a fixed 100x100 grid over the sample bounding box; time is
//! discretized per target individual at their own visit event times. Dwell
//! durations are modeled as exponential with the maximum-likelihood mean of
//! the observed inter-visit dwells.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::mobility::{Point, Trajectory};

use super::{EstimateSeries, Method, SeriesMeta};

/// Cells per axis of the spatial grid.
pub const GRID_DIM: usize = 100;

/// Spatial discretization plus the dwell-time model shared by all targets.
#[derive(Debug, Clone)]
pub struct GridModel {
    min: Point,
    cell_w: f64,
    cell_h: f64,
    /// Maximum-likelihood mean of observed inter-visit dwell durations.
    pub lambda_bar_s: f64,
}

impl GridModel {
    /// Fits the grid to the bounding box of all sample visits.
    pub fn build(sample: &[Trajectory]) -> Result<Self> {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut dwell_sum = 0.0f64;
        let mut dwell_count = 0u64;
        for traj in sample {
            for v in traj.visits() {
                min.x = min.x.min(v.position.x);
                min.y = min.y.min(v.position.y);
                max.x = max.x.max(v.position.x);
                max.y = max.y.max(v.position.y);
            }
            for w in traj.visits().windows(2) {
                dwell_sum += (w[1].time - w[0].time) as f64;
                dwell_count += 1;
            }
        }
        if !min.x.is_finite() {
            return Err(Error::invalid("density model needs a non-empty sample"));
        }
        // A degenerate extent would make the cell area zero; one meter keeps
        // the geometric factor defined.
        let width = (max.x - min.x).max(1.0);
        let height = (max.y - min.y).max(1.0);
        let lambda_bar_s = if dwell_count > 0 { dwell_sum / dwell_count as f64 } else { 0.0 };
        Ok(GridModel {
            min,
            cell_w: width / GRID_DIM as f64,
            cell_h: height / GRID_DIM as f64,
            lambda_bar_s,
        })
    }

    pub fn cell_of(&self, p: Point) -> (u16, u16) {
        let clamp = |v: f64| -> u16 { (v.floor().max(0.0) as usize).min(GRID_DIM - 1) as u16 };
        (clamp((p.x - self.min.x) / self.cell_w), clamp((p.y - self.min.y) / self.cell_h))
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_w * self.cell_h
    }

    /// P(a dwell lasts at least t_min) under the exponential model.
    pub fn p_long_enough(&self, t_min_s: i64) -> f64 {
        if self.lambda_bar_s <= 0.0 {
            return 0.0;
        }
        (-(t_min_s as f64) / self.lambda_bar_s).exp()
    }
}

/// P(one visit by an unobserved spreader infects the target) given the
/// target's cell probability mass and the dwell model.
pub(crate) fn single_visit_infection_prob(
    p_cell: f64,
    d_max_m: f64,
    cell_area: f64,
    p_long_enough: f64,
) -> f64 {
    (p_cell * (PI * d_max_m * d_max_m / cell_area) * p_long_enough).clamp(0.0, 1.0)
}

/// P(infected during a slice) for `n_c` spreader visits: 1 - (1 - p_c)^n_c.
pub(crate) fn slice_infection_prob(p_c: f64, n_c: f64) -> f64 {
    if n_c <= 0.0 || p_c <= 0.0 {
        return 0.0;
    }
    1.0 - (1.0 - p_c).powf(n_c)
}

/// One temporal slice of one target: everything that does not depend on the
/// running infected-count estimate.
struct Slice {
    start: i64,
    /// Per-visit infection probability from the target's own cell.
    p_c: f64,
    /// Observed visits during the slice scaled to the population, the
    /// per-spreader visit estimate.
    n_c_per_is: f64,
}

fn build_slices(
    target: &Trajectory,
    sample: &[Trajectory],
    model: &GridModel,
    params: &DiffusionParams,
    p_s: f64,
) -> Vec<Slice> {
    let p_long = model.p_long_enough(params.t_min_s);
    let visits = target.visits();
    let mut slices = Vec::with_capacity(visits.len());
    for (i, v) in visits.iter().enumerate() {
        let start = v.time;
        let end = visits.get(i + 1).map(|nv| nv.time).unwrap_or(target.horizon_end);
        let mut counts: HashMap<(u16, u16), u32> = HashMap::new();
        for other in sample {
            if other.person == target.person {
                continue;
            }
            // Individuals already present when the slice opens count once, in
            // the cell they occupy at that instant.
            if let Some(pos) = other.location_at(start) {
                *counts.entry(model.cell_of(pos)).or_insert(0) += 1;
            }
            let lo = other.visits().partition_point(|w| w.time <= start);
            for w in &other.visits()[lo..] {
                if w.time >= end {
                    break;
                }
                *counts.entry(model.cell_of(w.position)).or_insert(0) += 1;
            }
        }
        let total: u32 = counts.values().sum();
        let own_cell = model.cell_of(v.position);
        let p_cell = if total == 0 {
            0.0
        } else {
            counts.get(&own_cell).copied().unwrap_or(0) as f64 / total as f64
        };
        let p_c = single_visit_infection_prob(p_cell, params.d_max_m, model.cell_area(), p_long);
        slices.push(Slice { start, p_c, n_c_per_is: total as f64 / p_s });
    }
    slices
}

/// Density estimator over an ascending evaluation grid.
///
/// The number of currently spreading individuals at a slice is derived from
/// the method's own earlier estimates, `max(0, EI(a - mu_is) - EI(a - mu_r))`,
/// bootstrapped with `n * p_init` on [0, first evaluation step).
pub fn density_estimate(
    sample_trajectories: &[Trajectory],
    params: &DiffusionParams,
    p_s: f64,
    n: usize,
    grid: &[i64],
) -> Result<EstimateSeries> {
    if sample_trajectories.is_empty() {
        return Err(Error::invalid("density estimator needs a non-empty sample"));
    }
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Error::invalid("p_s must be in (0, 1]"));
    }
    params.validate()?;
    if grid.is_empty() || grid[0] < 0 {
        return Err(Error::invalid("evaluation grid must be non-empty and non-negative"));
    }

    let model = GridModel::build(sample_trajectories)?;
    let per_target: Vec<Vec<Slice>> = sample_trajectories
        .iter()
        .map(|traj| build_slices(traj, sample_trajectories, &model, params, p_s))
        .collect();

    let bootstrap = n as f64 * params.p_init;
    let first_step = grid.iter().copied().find(|&g| g > 0);
    let mut computed: Vec<f64> = Vec::with_capacity(grid.len());
    let ei_at = |computed: &[f64], tau: i64| -> f64 {
        if tau < 0 {
            return 0.0;
        }
        if let Some(step) = first_step {
            if tau < step {
                return bootstrap;
            }
        }
        match grid.iter().take(computed.len()).rposition(|&g| g <= tau) {
            Some(i) => computed[i],
            None => bootstrap,
        }
    };

    // Running survival product per target; slices fold in as t passes them.
    let mut survival: Vec<f64> = vec![1.0; per_target.len()];
    let mut next_slice: Vec<usize> = vec![0; per_target.len()];
    for &t in grid {
        for (u, slices) in per_target.iter().enumerate() {
            while next_slice[u] < slices.len() && slices[next_slice[u]].start < t {
                let s = &slices[next_slice[u]];
                let n_is = (ei_at(&computed, s.start - params.mu_is_s)
                    - ei_at(&computed, s.start - params.mu_r_s))
                .max(0.0);
                let p_t = slice_infection_prob(s.p_c, n_is * s.n_c_per_is);
                survival[u] *= 1.0 - p_t;
                next_slice[u] += 1;
            }
        }
        let total: f64 = survival.iter().map(|&s| 1.0 - s).sum();
        computed.push(total / p_s);
    }

    EstimateSeries::new(
        Method::Density,
        grid.to_vec(),
        computed,
        SeriesMeta { p_s, ..Default::default() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{PersonId, Visit};

    fn traj(id: u32, visits: &[(i64, f64, f64)], horizon: i64) -> Trajectory {
        Trajectory::build(
            visits
                .iter()
                .map(|&(t, x, y)| Visit {
                    person: PersonId(id),
                    time: t,
                    position: Point::new(x, y),
                })
                .collect(),
            horizon,
        )
        .unwrap()
    }

    fn params() -> DiffusionParams {
        DiffusionParams {
            mu_is_s: 100,
            mu_r_s: 300,
            p_inf: 0.5,
            p_init: 0.1,
            p_init_overrides: None,
            d_max_m: 5.0,
            t_min_s: 60,
        }
    }

    #[test]
    fn single_visit_prob_hand_value() {
        // p_cell = 1, geometric factor 0.25, p_long = 0.5 -> 0.125.
        let area = PI * 4.0 * 4.0 / 0.25;
        let p = single_visit_infection_prob(1.0, 4.0, area, 0.5);
        assert!((p - 0.125).abs() < 1e-12);
    }

    #[test]
    fn slice_prob_and_combination_hand_values() {
        // p_c = 0.5 with N_c = 2 -> 0.75.
        assert!((slice_infection_prob(0.5, 2.0) - 0.75).abs() < 1e-12);
        // Two slices at 0.5 each -> 1 - 0.25 = 0.75.
        let combined = 1.0 - (1.0 - 0.5f64) * (1.0 - 0.5);
        assert!((combined - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_visits_in_one_cell_concentrate_the_histogram() {
        // Five observers clustered far from the spread-out corners, so the
        // slice histogram puts every count into one cell.
        let mut sample = vec![traj(0, &[(0, 500.0, 500.0)], 1000)];
        for id in 1..6 {
            sample.push(traj(id, &[(0, 500.0, 500.0), (100 + id as i64, 501.0, 501.0)], 1000));
        }
        // Corner markers pin the bounding box.
        sample.push(traj(6, &[(0, 0.0, 0.0)], 1000));
        sample.push(traj(7, &[(0, 1000.0, 1000.0)], 1000));
        let model = GridModel::build(&sample).unwrap();
        let slices = build_slices(&sample[0], &sample, &model, &params(), 1.0);
        // All mass in the target's own cell: p_c reduces to the geometric
        // term times the dwell survival. Presence of the two corner markers
        // keeps p_cell below one.
        assert_eq!(slices.len(), 1);
        assert!(slices[0].p_c > 0.0);
        let expected_total = 7.0; // 5 cluster members + 2 corner markers at t=0
        assert!((slices[0].n_c_per_is - expected_total).abs() < 1e-12);
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert!(density_estimate(&[], &params(), 0.5, 100, &[0]).is_err());
    }

    #[test]
    fn estimate_starts_at_zero_and_stays_finite() {
        let sample = vec![
            traj(0, &[(0, 10.0, 10.0), (400, 12.0, 12.0)], 2000),
            traj(1, &[(0, 11.0, 10.0), (500, 300.0, 300.0)], 2000),
            traj(2, &[(100, 10.5, 10.5)], 2000),
        ];
        let grid = [0, 500, 1000, 1500, 2000];
        let est = density_estimate(&sample, &params(), 0.5, 6, &grid).unwrap();
        assert_eq!(est.values[0], 0.0);
        for v in &est.values {
            assert!(v.is_finite() && *v >= 0.0);
        }
        let again = density_estimate(&sample, &params(), 0.5, 6, &grid).unwrap();
        assert_eq!(est, again);
    }
}
