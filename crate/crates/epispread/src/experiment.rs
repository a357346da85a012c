//! Sampling, evaluation metrics and the end-to-end experiment runner.
//!
//! A run computes full-population ground truth, draws Bernoulli(p_s) node
//! samples, runs every enabled estimator on each draw and reports MAE and
//! bias per (method, p_s, day). Everything derives from one master seed.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, DiffusionParams, GroundTruth};
use crate::error::{Error, Result};
use crate::estimators::{
    density_estimate, pollspreader_estimate, pollsusceptible_estimate, scale_estimate,
    EstimateSeries, Method,
};
use crate::mobility::{Contact, PersonId, Trajectory};
use crate::network::ContactNetwork;
use crate::rng;

/// One Bernoulli(p_s) node sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub ids: Vec<PersonId>,
    pub p_s: f64,
    pub seed: u64,
}

/// Draws each individual independently with probability p_s.
///
/// Membership depends on (seed, id) only, not on the order of `population`.
pub fn draw_sample(population: &[PersonId], p_s: f64, seed: u64) -> Result<SampleSet> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(Error::invalid("p_s must be in [0, 1]"));
    }
    let mut ids: Vec<PersonId> = population
        .iter()
        .copied()
        .filter(|id| rng::uniform(seed, rng::tag::SAMPLE, id.0 as u64) < p_s)
        .collect();
    ids.sort_unstable();
    Ok(SampleSet { ids, p_s, seed })
}

/// Keeps only contacts whose both endpoints are sampled. Co-locations depend
/// only on the pair, so this equals re-detecting on the restricted input.
pub fn restrict_contacts(contacts: &[Contact], sample: &SampleSet) -> Vec<Contact> {
    let set: BTreeSet<PersonId> = sample.ids.iter().copied().collect();
    contacts
        .iter()
        .filter(|c| set.contains(&c.pair.a) && set.contains(&c.pair.b))
        .copied()
        .collect()
}

/// Keeps only trajectories of sampled individuals.
pub fn restrict_trajectories(trajectories: &[Trajectory], sample: &SampleSet) -> Vec<Trajectory> {
    let set: BTreeSet<PersonId> = sample.ids.iter().copied().collect();
    trajectories.iter().filter(|t| set.contains(&t.person)).cloned().collect()
}

fn check_aligned(estimates: &[EstimateSeries], truth_grid: &[i64]) -> Result<()> {
    for e in estimates {
        if e.times != truth_grid {
            return Err(Error::TimestampMismatch);
        }
    }
    Ok(())
}

/// Mean absolute error per timestamp: mean over draws of |estimate - truth|.
pub fn mae(estimates: &[EstimateSeries], truth: &GroundTruth) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::invalid("mae needs at least one series"));
    }
    check_aligned(estimates, &truth.grid)?;
    Ok((0..truth.grid.len())
        .map(|k| {
            estimates.iter().map(|e| (e.values[k] - truth.mean[k]).abs()).sum::<f64>()
                / estimates.len() as f64
        })
        .collect())
}

/// Signed bias per timestamp: mean over draws of estimate minus truth.
pub fn bias(estimates: &[EstimateSeries], truth: &GroundTruth) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::invalid("bias needs at least one series"));
    }
    check_aligned(estimates, &truth.grid)?;
    Ok((0..truth.grid.len())
        .map(|k| {
            estimates.iter().map(|e| e.values[k]).sum::<f64>() / estimates.len() as f64
                - truth.mean[k]
        })
        .collect())
}

/// Which estimators an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Scale,
    Density,
    Pollspreader,
    Pollsusceptible,
}

/// Everything the runner needs besides the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub params: DiffusionParams,
    pub p_s_values: Vec<f64>,
    /// Sample draws per p_s.
    pub draws: usize,
    /// Monte-Carlo runs for the ground truth (and inside scale).
    pub ground_truth_runs: usize,
    pub methods: Vec<EstimatorKind>,
    pub master_seed: u64,
    /// Evaluation timestamps, seconds; must be strictly increasing.
    pub grid: Vec<i64>,
}

/// One estimator outcome on one draw; failures are recorded, not fatal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub p_s: f64,
    pub draw: usize,
    pub sample_size: usize,
    pub series: Vec<EstimateSeries>,
    pub errors: Vec<String>,
}

/// Per-(method, p_s) aggregated error rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub p_s: f64,
    pub mae: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Full experiment result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spec: ExperimentSpec,
    pub population_size: usize,
    pub contact_count: usize,
    pub ground_truth: GroundTruth,
    pub outcomes: Vec<DrawOutcome>,
    pub summary: Vec<SummaryRow>,
}

fn run_estimators_on_draw(
    spec: &ExperimentSpec,
    trajectories: &[Trajectory],
    contacts: &[Contact],
    population: usize,
    sample: &SampleSet,
    draw: usize,
    draw_seed: u64,
) -> DrawOutcome {
    let mut series = Vec::new();
    let mut errors = Vec::new();
    let sample_contacts = restrict_contacts(contacts, sample);

    let mut network = None;
    let mut need_network = false;
    for m in &spec.methods {
        if matches!(m, EstimatorKind::Pollspreader | EstimatorKind::Pollsusceptible) {
            need_network = true;
        }
    }
    if need_network {
        match ContactNetwork::build(&sample_contacts, &sample.ids, population) {
            Ok(net) => network = Some(net),
            Err(e) => errors.push(format!("network: {e}")),
        }
    }

    for method in &spec.methods {
        let outcome: Result<Vec<EstimateSeries>> = match method {
            EstimatorKind::Scale => scale_estimate(
                &sample_contacts,
                &sample.ids,
                &spec.params,
                sample.p_s,
                spec.ground_truth_runs,
                rng::mix(draw_seed, rng::tag::SCALE_INNER, 0),
                &spec.grid,
            )
            .map(|s| vec![s]),
            EstimatorKind::Density => {
                let sample_trajs = restrict_trajectories(trajectories, sample);
                density_estimate(&sample_trajs, &spec.params, sample.p_s, population, &spec.grid)
                    .map(|s| vec![s])
            }
            EstimatorKind::Pollspreader => match &network {
                Some(net) => {
                    pollspreader_estimate(net, &spec.params, sample.p_s, &spec.grid).map(|s| vec![s])
                }
                None => Err(Error::invalid("no sample network")),
            },
            EstimatorKind::Pollsusceptible => match &network {
                Some(net) => pollsusceptible_estimate(net, &spec.params, sample.p_s, &spec.grid)
                    .map(|(l, u)| vec![l, u]),
                None => Err(Error::invalid("no sample network")),
            },
        };
        match outcome {
            Ok(mut s) => series.append(&mut s),
            Err(e) => errors.push(format!("{method:?} on draw {draw}: {e}")),
        }
    }
    DrawOutcome { p_s: sample.p_s, draw, sample_size: sample.ids.len(), series, errors }
}

/// Runs the full protocol: ground truth, draws, estimators, aggregation.
pub fn run_experiment(
    spec: &ExperimentSpec,
    trajectories: &[Trajectory],
    contacts: &[Contact],
) -> Result<EvaluationReport> {
    spec.params.validate()?;
    if spec.draws == 0 || spec.ground_truth_runs == 0 {
        return Err(Error::invalid("draws and ground_truth_runs must be positive"));
    }
    if spec.grid.is_empty() || spec.grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid must be non-empty and strictly increasing"));
    }
    for &p_s in &spec.p_s_values {
        if !(p_s > 0.0 && p_s <= 1.0) {
            return Err(Error::invalid("every p_s must be in (0, 1]"));
        }
    }
    let population: Vec<PersonId> = {
        let mut ids: Vec<PersonId> = trajectories.iter().map(|t| t.person).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    if population.len() != trajectories.len() {
        return Err(Error::invalid("duplicate individual in trajectory list"));
    }

    let ground_truth = diffusion::ground_truth(
        contacts,
        &population,
        &spec.params,
        spec.ground_truth_runs,
        rng::mix(spec.master_seed, rng::tag::GROUND_TRUTH, 0),
        &spec.grid,
    )?;

    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for ps_idx in 0..spec.p_s_values.len() {
        for draw in 0..spec.draws {
            tasks.push((ps_idx, draw));
        }
    }
    let mut outcomes: Vec<DrawOutcome> = tasks
        .par_iter()
        .map(|&(ps_idx, draw)| {
            let p_s = spec.p_s_values[ps_idx];
            let draw_seed =
                rng::mix(spec.master_seed, rng::tag::DRAW, (ps_idx * 10_000 + draw) as u64);
            let sample = draw_sample(&population, p_s, draw_seed)?;
            Ok(run_estimators_on_draw(
                spec,
                trajectories,
                contacts,
                population.len(),
                &sample,
                draw,
                draw_seed,
            ))
        })
        .collect::<Result<_>>()?;
    outcomes.sort_by(|a, b| (a.p_s, a.draw).partial_cmp(&(b.p_s, b.draw)).unwrap());

    let mut summary = Vec::new();
    for &p_s in &spec.p_s_values {
        let mut methods_seen: Vec<Method> = Vec::new();
        for o in outcomes.iter().filter(|o| o.p_s == p_s) {
            for s in &o.series {
                if !methods_seen.contains(&s.method) {
                    methods_seen.push(s.method);
                }
            }
        }
        for method in methods_seen {
            let group: Vec<EstimateSeries> = outcomes
                .iter()
                .filter(|o| o.p_s == p_s)
                .flat_map(|o| o.series.iter().filter(|s| s.method == method).cloned())
                .collect();
            if group.is_empty() {
                continue;
            }
            summary.push(SummaryRow {
                method,
                p_s,
                mae: mae(&group, &ground_truth)?,
                bias: bias(&group, &ground_truth)?,
            });
        }
    }

    Ok(EvaluationReport {
        spec: spec.clone(),
        population_size: population.len(),
        contact_count: contacts.len(),
        ground_truth,
        outcomes,
        summary,
    })
}

impl EvaluationReport {
    /// Writes `report.json`, `curves.csv` and `summary.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("report.json"), json)?;

        let mut curves = csv::Writer::from_path(dir.join("curves.csv"))?;
        curves.write_record(["day", "method", "p_s", "draw", "value"])?;
        for (k, &t) in self.ground_truth.grid.iter().enumerate() {
            curves.write_record([
                crate::estimators::format_day(t),
                "ground_truth".to_string(),
                "1".to_string(),
                "0".to_string(),
                format!("{}", self.ground_truth.mean[k]),
            ])?;
        }
        for o in &self.outcomes {
            for s in &o.series {
                for (k, &t) in s.times.iter().enumerate() {
                    curves.write_record([
                        crate::estimators::format_day(t),
                        s.method.as_str().to_string(),
                        format!("{}", o.p_s),
                        o.draw.to_string(),
                        format!("{}", s.values[k]),
                    ])?;
                }
            }
        }
        curves.flush()?;

        let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
        summary.write_record(["day", "method", "p_s", "mae", "bias"])?;
        for row in &self.summary {
            for (k, &t) in self.ground_truth.grid.iter().enumerate() {
                summary.write_record([
                    crate::estimators::format_day(t),
                    row.method.as_str().to_string(),
                    format!("{}", row.p_s),
                    format!("{}", row.mae[k]),
                    format!("{}", row.bias[k]),
                ])?;
            }
        }
        summary.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::PairKey;

    fn params() -> DiffusionParams {
        DiffusionParams {
            mu_is_s: 2,
            mu_r_s: 10,
            p_inf: 0.5,
            p_init: 0.2,
            p_init_overrides: None,
            d_max_m: 10.0,
            t_min_s: 0,
        }
    }

    fn ids(n: u32) -> Vec<PersonId> {
        (0..n).map(PersonId).collect()
    }

    #[test]
    fn sample_extremes() {
        let pop = ids(50);
        assert_eq!(draw_sample(&pop, 1.0, 7).unwrap().ids.len(), 50);
        assert!(draw_sample(&pop, 0.0, 7).unwrap().ids.is_empty());
        assert!(draw_sample(&pop, 1.5, 7).is_err());
    }

    #[test]
    fn sample_size_is_binomial() {
        let n = 10_000;
        let pop = ids(n);
        let p_s = 0.1;
        let trials = 30;
        let mean: f64 = (0..trials)
            .map(|s| draw_sample(&pop, p_s, s).unwrap().ids.len() as f64)
            .sum::<f64>()
            / trials as f64;
        let se = (n as f64 * p_s * (1.0 - p_s) / trials as f64).sqrt();
        assert!((mean - 1000.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sample_is_order_independent() {
        let pop = ids(100);
        let mut reversed = pop.clone();
        reversed.reverse();
        let a = draw_sample(&pop, 0.3, 5).unwrap();
        let b = draw_sample(&reversed, 0.3, 5).unwrap();
        assert_eq!(a.ids, b.ids);
    }

    fn series_with(values: Vec<f64>, grid: Vec<i64>) -> EstimateSeries {
        EstimateSeries::new(Method::Scale, grid, values, Default::default()).unwrap()
    }

    fn truth(grid: Vec<i64>, mean: Vec<f64>) -> GroundTruth {
        let n = grid.len();
        GroundTruth { grid, mean, std: vec![0.0; n], runs: 1 }
    }

    #[test]
    fn mae_and_bias_hand_values() {
        let grid = vec![0, 1, 2];
        let t = truth(grid.clone(), vec![10.0, 10.0, 10.0]);
        let above = series_with(vec![15.0, 15.0, 15.0], grid.clone());
        let below = series_with(vec![5.0, 5.0, 5.0], grid.clone());
        let m = mae(&[above.clone(), below.clone()], &t).unwrap();
        let b = bias(&[above, below], &t).unwrap();
        assert_eq!(m, vec![5.0, 5.0, 5.0]);
        assert_eq!(b, vec![0.0, 0.0, 0.0]);

        let low3 = series_with(vec![7.0, 7.0, 7.0], grid.clone());
        assert_eq!(bias(&[low3.clone()], &t).unwrap(), vec![-3.0, -3.0, -3.0]);
        assert_eq!(mae(&[low3.clone()], &t).unwrap(), vec![3.0, 3.0, 3.0]);

        let wrong_grid = series_with(vec![1.0], vec![5]);
        assert!(mae(&[wrong_grid], &t).is_err());
    }

    #[test]
    fn mae_dominates_bias() {
        let grid = vec![0, 1];
        let t = truth(grid.clone(), vec![3.0, 4.0]);
        let series: Vec<EstimateSeries> = (0..5)
            .map(|i| series_with(vec![i as f64, 2.0 * i as f64], grid.clone()))
            .collect();
        let m = mae(&series, &t).unwrap();
        let b = bias(&series, &t).unwrap();
        for k in 0..grid.len() {
            assert!(m[k] >= b[k].abs() - 1e-12);
        }
    }

    fn toy_inputs() -> (Vec<Trajectory>, Vec<Contact>) {
        use crate::mobility::{Point, Visit};
        let mut trajs = Vec::new();
        for id in 0..12u32 {
            trajs.push(
                Trajectory::build(
                    vec![Visit {
                        person: PersonId(id),
                        time: 0,
                        position: Point::new(id as f64 * 100.0, 0.0),
                    }],
                    100,
                )
                .unwrap(),
            );
        }
        let contacts = vec![
            Contact { pair: PairKey::new(PersonId(0), PersonId(1)), start: 4, end: 20 },
            Contact { pair: PairKey::new(PersonId(1), PersonId(2)), start: 7, end: 30 },
            Contact { pair: PairKey::new(PersonId(3), PersonId(4)), start: 9, end: 40 },
        ];
        (trajs, contacts)
    }

    #[test]
    fn experiment_is_deterministic_and_shaped() {
        let (trajs, contacts) = toy_inputs();
        let spec = ExperimentSpec {
            params: params(),
            p_s_values: vec![0.5, 1.0],
            draws: 3,
            ground_truth_runs: 4,
            methods: vec![
                EstimatorKind::Scale,
                EstimatorKind::Pollspreader,
                EstimatorKind::Pollsusceptible,
            ],
            master_seed: 11,
            grid: vec![0, 25, 50, 100],
        };
        let a = run_experiment(&spec, &trajs, &contacts).unwrap();
        let b = run_experiment(&spec, &trajs, &contacts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.outcomes.len(), 6);
        // scale + pollspreader + pollsus lower + pollsus upper
        for o in &a.outcomes {
            assert!(o.errors.is_empty(), "{:?}", o.errors);
            assert_eq!(o.series.len(), 4);
        }
        let json_a = serde_json::to_string(&a).unwrap();
        let json_b = serde_json::to_string(&b).unwrap();
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn report_files_are_written() {
        let (trajs, contacts) = toy_inputs();
        let spec = ExperimentSpec {
            params: params(),
            p_s_values: vec![1.0],
            draws: 1,
            ground_truth_runs: 2,
            methods: vec![EstimatorKind::Scale],
            master_seed: 3,
            grid: vec![0, 50],
        };
        let report = run_experiment(&spec, &trajs, &contacts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write_dir(dir.path()).unwrap();
        for name in ["report.json", "curves.csv", "summary.csv"] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert!(curves.starts_with("day,method,p_s,draw,value\n"));
        assert!(curves.contains("ground_truth"));
    }
}
