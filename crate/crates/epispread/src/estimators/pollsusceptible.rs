//! Recursive estimator from the susceptibles' view, with lower and upper
//! bound corrections for unobserved neighbors.
//!
//! The probability that a path's deepest node starts a transmission chain
//! reaching the target decomposes over its time-ordered contacts; unseen
//! neighbors are corrected for by exponentiating the not-infected product
//! with the Theorem-style exponents: `c_l = 1/p_s` for the lower bound
//! (Jensen direction) and the quadratic root `c_u` for the upper bound
//! (Hoeffding direction).

use std::collections::HashMap;

use rayon::prelude::*;

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::mobility::PersonId;
use crate::network::ContactNetwork;

use super::{
    compute_exponents, estimate_p_min, BoundExponents, EstimateSeries, Method, SeriesMeta,
};

/// Closed integer intervals [lo, hi], sorted and disjoint: the set of
/// infection times of the path's deepest node from which transmission can
/// still reach the target in time.
#[derive(Debug, Clone)]
struct FeasibleTimes(Vec<(i64, i64)>);

impl FeasibleTimes {
    fn root(t: i64) -> Self {
        FeasibleTimes(vec![(0, t)])
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn contains(&self, x: i64) -> bool {
        self.0.iter().any(|&(lo, hi)| lo <= x && x <= hi)
    }

    /// Shift each feasible contact start c back by the spreading window:
    /// the predecessor must have been infected in [c - mu_r + 1, c - mu_is].
    fn pull_back(&self, contact_starts: impl Iterator<Item = i64>, params: &DiffusionParams) -> Self {
        let mut intervals: Vec<(i64, i64)> = contact_starts
            .filter(|&c| self.contains(c))
            .filter_map(|c| {
                let lo = (c - params.mu_r_s + 1).max(0);
                let hi = c - params.mu_is_s;
                (hi >= 0 && lo <= hi).then_some((lo, hi))
            })
            .collect();
        intervals.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 + 1 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        FeasibleTimes(merged)
    }
}

struct PathContext<'a> {
    net: &'a ContactNetwork,
    params: &'a DiffusionParams,
    /// Evaluation horizon: infections count if they happen at or before it.
    t: i64,
    max_hops: usize,
    exp_lower: f64,
    exp_upper: f64,
}

/// Per-prefix-length memo of full-path transmission values; entries for a
/// given length stay valid while that prefix of the path is unchanged.
type TransmissionMemo = Vec<HashMap<i64, f64>>;

/// P(transmission reaches path[0] by `until` | path's last node infected at
/// `t_infection`), decomposed over the last pair's time-ordered contacts.
fn transmission_value(
    ctx: &PathContext<'_>,
    path: &[PersonId],
    len: usize,
    t_infection: i64,
    memo: &mut TransmissionMemo,
) -> f64 {
    if len <= 1 {
        return 1.0;
    }
    if let Some(&v) = memo[len].get(&t_infection) {
        return v;
    }
    let last = path[len - 1];
    let prev = path[len - 2];
    let window_lo = t_infection + ctx.params.mu_is_s;
    let window_hi = t_infection + ctx.params.mu_r_s;
    let p_inf = ctx.params.p_inf;

    let mut p = 0.0;
    let mut all_previous_missed = 1.0;
    for &(start, _) in ctx.net.contacts_between(last, prev) {
        if start >= window_hi || start > ctx.t {
            break;
        }
        if start < window_lo {
            continue;
        }
        let inner = transmission_value(ctx, path, len - 1, start, memo);
        p += inner * p_inf * all_previous_missed;
        all_previous_missed *= 1.0 - p_inf;
    }
    memo[len].insert(t_infection, p);
    p
}

/// Probability bounds that the path's last node gets infected (from outside
/// the path or initially) and transmits along the path to path[0] by time t.
fn path_infection_bounds(
    ctx: &PathContext<'_>,
    path: &mut Vec<PersonId>,
    feasible: &FeasibleTimes,
    memo: &mut TransmissionMemo,
) -> (f64, f64) {
    let last = *path.last().unwrap();

    // Product over sampled neighbors of (1 - bound): using neighbor lowers
    // gives the high estimate of the not-infected product, neighbor uppers
    // the low one.
    let mut p_not_hi = 1.0;
    let mut p_not_lo = 1.0;
    if path.len() <= ctx.max_hops {
        let partners = ctx.net.partners(last).expect("path nodes are in the network");
        for &v in partners {
            if path.contains(&v) {
                continue;
            }
            let starts = ctx.net.contacts_between(v, last).iter().map(|&(s, _)| s);
            let deeper = feasible.pull_back(starts, ctx.params);
            if deeper.is_empty() {
                // No timing-feasible chain through v: its whole subtree has
                // probability exactly zero.
                continue;
            }
            path.push(v);
            memo[path.len()].clear();
            let (l, u) = path_infection_bounds(ctx, path, &deeper, memo);
            path.pop();
            p_not_hi *= 1.0 - l;
            p_not_lo *= 1.0 - u;
        }
    }

    let p_init = ctx.params.p_init_for(last);
    let p_start = p_init * transmission_value(ctx, path, path.len(), 0, memo);
    let lower = p_start + (1.0 - p_init) * (1.0 - p_not_hi.powf(ctx.exp_lower));
    let upper = p_start + (1.0 - p_init) * (1.0 - p_not_lo.powf(ctx.exp_upper));
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

fn validate_path(net: &ContactNetwork, path: &[PersonId]) -> Result<()> {
    if path.is_empty() {
        return Err(Error::invalid("path must contain at least one individual"));
    }
    for (i, id) in path.iter().enumerate() {
        if !net.contains(*id) {
            return Err(Error::UnknownPerson(id.0));
        }
        if path[..i].contains(id) {
            return Err(Error::invalid("path ids must be distinct"));
        }
    }
    Ok(())
}

fn make_context<'a>(
    net: &'a ContactNetwork,
    params: &'a DiffusionParams,
    t: i64,
    exp_lower: f64,
    exp_upper: f64,
) -> Result<PathContext<'a>> {
    if t < 0 {
        return Err(Error::invalid("evaluation time must be non-negative"));
    }
    params.validate()?;
    let max_hops = (t / params.mu_is_s) as usize;
    Ok(PathContext { net, params, t, max_hops, exp_lower, exp_upper })
}

/// P(transmission through the whole path reaches path[0] by `t` | the last
/// node of `path` got infected at `t_infection`). A single-node path returns 1.
pub fn calc_prob_transmission(
    net: &ContactNetwork,
    params: &DiffusionParams,
    path: &[PersonId],
    t_infection: i64,
    t: i64,
) -> Result<f64> {
    validate_path(net, path)?;
    let ctx = make_context(net, params, t, 1.0, 1.0)?;
    let mut memo: TransmissionMemo = vec![HashMap::new(); path.len() + 1];
    Ok(transmission_value(&ctx, path, path.len(), t_infection, &mut memo))
}

/// Lower and upper bounds on the probability that infection reaches path[0]
/// through `path` by time `t`, given the exponent pair.
///
/// When the upper exponent is infeasible the upper bound falls back to the
/// lower exponent; callers surface that through the series metadata.
pub fn calc_prob_inf(
    net: &ContactNetwork,
    params: &DiffusionParams,
    exponents: &BoundExponents,
    path: &[PersonId],
    t: i64,
) -> Result<(f64, f64)> {
    validate_path(net, path)?;
    let exp_upper = exponents.c_u.unwrap_or(exponents.c_l);
    let ctx = make_context(net, params, t, exponents.c_l, exp_upper)?;

    // Rebuild the feasible-time set along the given prefix.
    let mut feasible = FeasibleTimes::root(t);
    for w in path.windows(2) {
        let starts = net.contacts_between(w[1], w[0]).iter().map(|&(s, _)| s);
        feasible = feasible.pull_back(starts, params);
    }
    if feasible.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut work_path = path.to_vec();
    let mut memo: TransmissionMemo = vec![HashMap::new(); ctx.max_hops.max(path.len()) + 2];
    Ok(path_infection_bounds(&ctx, &mut work_path, &feasible, &mut memo))
}

/// PollSusceptible: per-sampled-individual bound pairs summed and scaled by
/// 1 / p_s, for every timestamp of the grid.
///
/// Returns the (lower, upper) series. At `p_s = 1` the sample is the whole
/// population, no correction is needed and both exponents collapse to 1.
pub fn pollsusceptible_estimate(
    sample_network: &ContactNetwork,
    params: &DiffusionParams,
    p_s: f64,
    grid: &[i64],
) -> Result<(EstimateSeries, EstimateSeries)> {
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(Error::invalid("p_s must be in (0, 1]"));
    }
    params.validate()?;
    let p_min = estimate_p_min(sample_network, params);
    let exponents = compute_exponents(p_s, p_min)?;
    let (exp_upper, feasible) = if p_s == 1.0 {
        (exponents.c_l, true)
    } else {
        match exponents.c_u {
            Some(c_u) if exponents.feasible => (c_u, true),
            _ => (exponents.c_l, false),
        }
    };
    let effective = BoundExponents {
        c_l: exponents.c_l,
        c_u: Some(exp_upper),
        p_min,
        feasible,
    };

    let nodes = sample_network.nodes().to_vec();
    let per_node: Vec<Vec<(f64, f64)>> = nodes
        .par_iter()
        .map(|&u| {
            grid.iter()
                .map(|&t| calc_prob_inf(sample_network, params, &effective, &[u], t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut lower = vec![0.0f64; grid.len()];
    let mut upper = vec![0.0f64; grid.len()];
    for node_series in &per_node {
        for (k, &(l, u)) in node_series.iter().enumerate() {
            lower[k] += l;
            upper[k] += u;
        }
    }
    for v in lower.iter_mut().chain(upper.iter_mut()) {
        *v /= p_s;
    }

    let meta = SeriesMeta {
        p_s,
        p_min: Some(p_min),
        c_l: Some(exponents.c_l),
        c_u: Some(exp_upper),
        feasible: Some(feasible),
        ..Default::default()
    };
    Ok((
        EstimateSeries::new(Method::PollsusLower, grid.to_vec(), lower, meta.clone())?,
        EstimateSeries::new(Method::PollsusUpper, grid.to_vec(), upper, meta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::enumerate_exact;
    use crate::mobility::{Contact, PairKey};

    fn contact(a: u32, b: u32, start: i64) -> Contact {
        Contact { pair: PairKey::new(PersonId(a), PersonId(b)), start, end: start + 1 }
    }

    fn params(mu_is: i64, mu_r: i64, p_inf: f64, p_init: f64) -> DiffusionParams {
        DiffusionParams {
            mu_is_s: mu_is,
            mu_r_s: mu_r,
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

    fn unit_exponents() -> BoundExponents {
        BoundExponents { c_l: 1.0, c_u: Some(1.0), p_min: 1.0, feasible: true }
    }

    #[test]
    fn single_node_path_transmits_with_certainty() {
        let net = ContactNetwork::build(&[], &ids(1), 1).unwrap();
        let p = params(2, 10, 0.5, 0.1);
        let v = calc_prob_transmission(&net, &p, &[PersonId(0)], 0, 100).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn two_contacts_in_window_hand_value() {
        // p_inf = 0.1, two qualifying contacts: 0.1 + 0.9 * 0.1 = 0.19.
        let contacts = vec![contact(0, 1, 3), contact(0, 1, 5)];
        let net = ContactNetwork::build(&contacts, &ids(2), 2).unwrap();
        let p = params(2, 10, 0.1, 0.1);
        let v =
            calc_prob_transmission(&net, &p, &[PersonId(0), PersonId(1)], 0, 100).unwrap();
        assert!((v - 0.19).abs() < 1e-12);
    }

    #[test]
    fn no_contacts_in_window_is_zero() {
        let contacts = vec![contact(0, 1, 50)];
        let net = ContactNetwork::build(&contacts, &ids(2), 2).unwrap();
        let p = params(2, 10, 0.5, 0.1);
        // Window for infection at 0 is [2, 10); the only contact is at 50.
        let v = calc_prob_transmission(&net, &p, &[PersonId(0), PersonId(1)], 0, 100).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn horizon_caps_transmission_times() {
        let contacts = vec![contact(0, 1, 5)];
        let net = ContactNetwork::build(&contacts, &ids(2), 2).unwrap();
        let p = params(2, 10, 1.0, 0.1);
        let path = [PersonId(0), PersonId(1)];
        assert_eq!(calc_prob_transmission(&net, &p, &path, 0, 4).unwrap(), 0.0);
        assert_eq!(calc_prob_transmission(&net, &p, &path, 0, 5).unwrap(), 1.0);
    }

    #[test]
    fn isolated_node_bounds_are_p_init() {
        let net = ContactNetwork::build(&[], &ids(3), 3).unwrap();
        let p = params(2, 10, 0.5, 0.37);
        let (l, u) = calc_prob_inf(&net, &p, &unit_exponents(), &[PersonId(0)], 50).unwrap();
        assert!((l - 0.37).abs() < 1e-12);
        assert!((u - 0.37).abs() < 1e-12);
    }

    #[test]
    fn fully_sampled_pair_matches_enumeration() {
        let contacts = vec![contact(0, 1, 5)];
        let net = ContactNetwork::build(&contacts, &ids(2), 2).unwrap();
        let p = params(2, 10, 1.0, 0.5);
        let (l, u) = calc_prob_inf(&net, &p, &unit_exponents(), &[PersonId(0)], 100).unwrap();
        assert!((l - 0.75).abs() < 1e-12);
        assert!((u - 0.75).abs() < 1e-12);
        let exact = enumerate_exact(&contacts, &ids(2), &p, 100).unwrap();
        assert!((exact.p_infected[0] - l).abs() < 1e-12);
    }

    #[test]
    fn fully_sampled_chain_matches_enumeration() {
        // 0 - 1 - 2 - 3 chain with assorted contact times and repeats.
        let contacts = vec![
            contact(0, 1, 4),
            contact(0, 1, 9),
            contact(1, 2, 7),
            contact(2, 3, 3),
            contact(2, 3, 12),
        ];
        let nodes = ids(4);
        let net = ContactNetwork::build(&contacts, &nodes, 4).unwrap();
        let p = params(2, 9, 0.35, 0.25);
        for t in [0, 5, 9, 20, 40] {
            let exact = enumerate_exact(&contacts, &nodes, &p, t).unwrap();
            for (i, &u) in nodes.iter().enumerate() {
                let (l, up) = calc_prob_inf(&net, &p, &unit_exponents(), &[u], t).unwrap();
                assert!(
                    (l - exact.p_infected[i]).abs() < 1e-9,
                    "node {i} t {t}: lower {l} exact {}",
                    exact.p_infected[i]
                );
                assert!((up - exact.p_infected[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bounds_are_ordered_under_subsampling() {
        let contacts = vec![
            contact(0, 1, 4),
            contact(1, 2, 7),
            contact(2, 0, 10),
            contact(2, 3, 12),
            contact(3, 0, 15),
        ];
        let nodes = ids(4);
        let net = ContactNetwork::build(&contacts, &nodes, 8).unwrap();
        let p = params(2, 9, 0.3, 0.2);
        let exps = compute_exponents(0.8, estimate_p_min(&net, &p)).unwrap();
        assert!(exps.feasible);
        for t in [5, 10, 20, 40] {
            for &u in &nodes {
                let (l, up) = calc_prob_inf(&net, &p, &exps, &[u], t).unwrap();
                assert!(l <= up + 1e-12, "t {t} node {u}: {l} > {up}");
                assert!((0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&up));
            }
        }
    }

    #[test]
    fn upper_bound_is_monotone_in_t() {
        let contacts = vec![contact(0, 1, 4), contact(1, 2, 9), contact(0, 2, 14)];
        let nodes = ids(3);
        let net = ContactNetwork::build(&contacts, &nodes, 6).unwrap();
        let p = params(2, 9, 0.4, 0.1);
        let exps = compute_exponents(0.7, estimate_p_min(&net, &p)).unwrap();
        let mut prev = 0.0;
        for t in 0..40 {
            let (_, u) = calc_prob_inf(&net, &p, &exps, &[PersonId(0)], t).unwrap();
            assert!(u >= prev - 1e-12, "t {t}: {u} < {prev}");
            prev = u;
        }
    }

    #[test]
    fn hop_cap_freezes_early_estimates() {
        // Before one latency has elapsed no transmission can have happened.
        let contacts = vec![contact(0, 1, 1)];
        let nodes = ids(2);
        let net = ContactNetwork::build(&contacts, &nodes, 4).unwrap();
        let p = params(10, 20, 1.0, 0.2);
        let (series_l, series_u) =
            pollsusceptible_estimate(&net, &p, 0.5, &[0, 5, 9]).unwrap();
        for v in series_l.values.iter().chain(series_u.values.iter()) {
            assert!((v - 2.0 * 0.2 / 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn full_sampling_collapses_bounds() {
        let contacts = vec![contact(0, 1, 4), contact(1, 2, 9), contact(0, 2, 14)];
        let nodes = ids(3);
        let net = ContactNetwork::build(&contacts, &nodes, 3).unwrap();
        let p = params(2, 9, 0.6, 0.15);
        let (lo, hi) = pollsusceptible_estimate(&net, &p, 1.0, &[0, 10, 20, 40]).unwrap();
        assert_eq!(lo.values, hi.values);
        assert_eq!(lo.meta.c_l, Some(1.0));
        assert_eq!(lo.meta.c_u, Some(1.0));
        assert_eq!(lo.meta.feasible, Some(true));
    }

    #[test]
    fn infeasible_exponent_is_flagged_and_falls_back() {
        // Many repeat contacts with high p_inf push p_min low enough that a
        // small p_s violates the feasibility precondition.
        let contacts: Vec<Contact> = (0..8).map(|i| contact(0, 1, 3 + i)).collect();
        let nodes = ids(2);
        let net = ContactNetwork::build(&contacts, &nodes, 40).unwrap();
        let p = params(2, 30, 0.9, 0.1);
        let (lo, hi) = pollsusceptible_estimate(&net, &p, 0.05, &[0, 20]).unwrap();
        assert_eq!(lo.meta.feasible, Some(false));
        assert_eq!(hi.meta.c_u, hi.meta.c_l);
    }

    #[test]
    fn rejects_bad_paths() {
        let net = ContactNetwork::build(&[], &ids(2), 2).unwrap();
        let p = params(2, 10, 0.5, 0.1);
        let e = unit_exponents();
        assert!(calc_prob_inf(&net, &p, &e, &[], 10).is_err());
        assert!(calc_prob_inf(&net, &p, &e, &[PersonId(0), PersonId(0)], 10).is_err());
        assert!(calc_prob_inf(&net, &p, &e, &[PersonId(9)], 10).is_err());
    }
}
