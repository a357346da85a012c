//! First-hop estimator from the spreaders' view.
//!
//! The expected number of infection events until `t` equals the expected
//! weight of edges crossing the random initial-infection cut; spreading those
//! events uniformly over the susceptible pool gives a per-individual
//! infection probability.

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::network::ContactNetwork;

use super::{EstimateSeries, Method, SeriesMeta};

/// Estimates the infected count from the sampled cut statistic.
///
/// For each t: `e = cut_statistic_sampled(t)`, `E|S| = n (1 - p_init)`,
/// `p = p_init + (1 - p_init) (1 - (1 - 1/E|S|)^e)` and the estimate is
/// `n * p`. Covers first-hop infections only, so it trails the truth once
/// multi-hop transmission matters.
pub fn pollspreader_estimate(
    sample_network: &ContactNetwork,
    params: &DiffusionParams,
    p_s: f64,
    grid: &[i64],
) -> Result<EstimateSeries> {
    let n = sample_network.population_size as f64;
    let susceptible_pool = n * (1.0 - params.p_init);
    if susceptible_pool <= 1.0 {
        return Err(Error::invalid(
            "pollspreader needs an expected susceptible pool larger than one",
        ));
    }
    let values: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let e_c = sample_network.cut_statistic_sampled(t, params, p_s)?;
            let p_hit = 1.0 - (1.0 - 1.0 / susceptible_pool).powf(e_c);
            let p = params.p_init + (1.0 - params.p_init) * p_hit;
            Ok(n * p)
        })
        .collect::<Result<_>>()?;
    EstimateSeries::new(
        Method::Pollspreader,
        grid.to_vec(),
        values,
        SeriesMeta { p_s, ..Default::default() },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::{Contact, PairKey, PersonId};

    fn params(p_inf: f64, p_init: f64) -> DiffusionParams {
        DiffusionParams {
            mu_is_s: 2,
            mu_r_s: 5,
            p_inf,
            p_init,
            p_init_overrides: None,
            d_max_m: 10.0,
            t_min_s: 0,
        }
    }

    fn ids(n: u32) -> Vec<PersonId> {
        (0..n).map(PersonId).collect()
    }

    #[test]
    fn no_cut_weight_gives_initial_infections() {
        let net = ContactNetwork::build(&[], &ids(10), 10).unwrap();
        let est = pollspreader_estimate(&net, &params(0.5, 0.1), 1.0, &[5]).unwrap();
        assert!((est.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_evaluated_estimate() {
        // n=10, p_init=0.1, e_c=0.0675:
        // p = 0.1 + 0.9 (1 - (8/9)^0.0675) ~= 0.1071.
        let n = 10.0f64;
        let p_init = 0.1f64;
        let e_c = 0.0675f64;
        let pool = n * (1.0 - p_init);
        let p = p_init + (1.0 - p_init) * (1.0 - (1.0 - 1.0 / pool).powf(e_c));
        assert!((p - 0.1071).abs() < 1e-4);

        // Reproduce the same e_c through a real sampled network: one pair,
        // one contact in window, w = p_inf = 0.3 at p_s = 1 gives
        // e_c = 2 * 0.1 * 0.9 * 0.3 = 0.054; with p_s such that 1/p_s^2
        // scales to 0.0675 it would need p_s = sqrt(0.054 / 0.0675) = 0.8944.
        let contacts = vec![Contact { pair: PairKey::new(PersonId(0), PersonId(1)), start: 3, end: 4 }];
        let net = ContactNetwork::build(&contacts, &ids(2), 10).unwrap();
        let prm = params(0.3, 0.1);
        let p_s = (0.054f64 / 0.0675).sqrt();
        let est = pollspreader_estimate(&net, &prm, p_s, &[10]).unwrap();
        assert!((est.values[0] - n * p).abs() < 1e-3, "{} vs {}", est.values[0], n * p);
    }

    #[test]
    fn degenerate_susceptible_pool_is_rejected() {
        let net = ContactNetwork::build(&[], &ids(2), 2).unwrap();
        assert!(pollspreader_estimate(&net, &params(0.5, 0.9), 1.0, &[5]).is_err());
    }

    #[test]
    fn full_sampling_matches_full_information_cut() {
        let contacts = vec![
            Contact { pair: PairKey::new(PersonId(0), PersonId(1)), start: 3, end: 4 },
            Contact { pair: PairKey::new(PersonId(1), PersonId(2)), start: 4, end: 5 },
        ];
        let net = ContactNetwork::build(&contacts, &ids(3), 3).unwrap();
        let prm = params(0.4, 0.1);
        let est = pollspreader_estimate(&net, &prm, 1.0, &[10]).unwrap();
        let e_c = net.cut_statistic_full(10, &prm);
        let pool = 3.0 * 0.9;
        let expected = 3.0 * (0.1 + 0.9 * (1.0 - (1.0 - 1.0 / pool).powf(e_c)));
        assert!((est.values[0] - expected).abs() < 1e-12);
    }
}
