//! Baseline: simulate the sub-sample and scale counts by 1 / p_s.

use crate::diffusion::{self, DiffusionParams};
use crate::error::{Error, Result};
use crate::mobility::{Contact, PersonId};
use crate::rng;

use super::{EstimateSeries, Method, SeriesMeta};

/// Scales the mean of `r` sub-sample Monte-Carlo runs up to the population.
///
/// Unbiased at t = 0; for later times it misses infections arriving through
/// unobserved individuals, so it systematically underestimates.
pub fn scale_estimate(
    sample_contacts: &[Contact],
    sample_ids: &[PersonId],
    params: &DiffusionParams,
    p_s: f64,
    r: usize,
    seed: u64,
    grid: &[i64],
) -> Result<EstimateSeries> {
    if r < 1 {
        return Err(Error::invalid("scale estimator needs at least one run"));
    }
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Error::invalid("p_s must be in (0, 1]"));
    }
    let mut sums = vec![0.0f64; grid.len()];
    for i in 0..r {
        let run_seed = rng::mix(seed, rng::tag::SCALE_INNER, i as u64);
        let res = diffusion::simulate_once(sample_contacts, sample_ids, params, run_seed)?;
        for (k, count) in res.cumulative_series(grid).into_iter().enumerate() {
            sums[k] += count as f64;
        }
    }
    let values: Vec<f64> = sums.into_iter().map(|s| s / (r as f64 * p_s)).collect();
    EstimateSeries::new(
        Method::Scale,
        grid.to_vec(),
        values,
        SeriesMeta { p_s, seed: Some(seed), ..Default::default() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::PairKey;

    fn params(p_inf: f64, p_init: f64) -> DiffusionParams {
        DiffusionParams {
            mu_is_s: 2,
            mu_r_s: 10,
            p_inf,
            p_init,
            p_init_overrides: None,
            d_max_m: 10.0,
            t_min_s: 0,
        }
    }

    #[test]
    fn certain_initial_infection_gives_sample_over_ps() {
        let ids: Vec<PersonId> = (0..8).map(PersonId).collect();
        let est = scale_estimate(&[], &ids, &params(0.5, 1.0), 0.4, 3, 1, &[0, 100]).unwrap();
        assert!((est.values[0] - 8.0 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn r_zero_is_rejected() {
        assert!(scale_estimate(&[], &[PersonId(0)], &params(0.5, 0.5), 0.5, 0, 1, &[0]).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let ids: Vec<PersonId> = (0..10).map(PersonId).collect();
        let contacts = vec![Contact {
            pair: PairKey::new(PersonId(0), PersonId(1)),
            start: 5,
            end: 6,
        }];
        let p = params(0.7, 0.3);
        let a = scale_estimate(&contacts, &ids, &p, 0.5, 10, 42, &[0, 50]).unwrap();
        let b = scale_estimate(&contacts, &ids, &p, 0.5, 10, 42, &[0, 50]).unwrap();
        assert_eq!(a, b);
    }
}
