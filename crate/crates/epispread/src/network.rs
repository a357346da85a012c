//! Time-varying directed contact graph and its cut statistics.
//!
//! The graph mirrors the unordered contact set both ways: an edge (u, v)
//! exists for a window whenever the pair has a contact starting in it. Edge
//! weights are transmission probabilities given the source's infection time.

use std::collections::HashMap;

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::mobility::{Contact, PairKey, PersonId};

/// Immutable contact graph over a node set, with per-pair time-sorted
/// contact lists and the size of the population it represents.
#[derive(Debug, Clone)]
pub struct ContactNetwork {
    nodes: Vec<PersonId>,
    node_index: HashMap<PersonId, usize>,
    /// Contact (start, end) lists per pair, sorted by start.
    pair_contacts: HashMap<PairKey, Vec<(i64, i64)>>,
    /// Partners of each node, ascending by id.
    adjacency: Vec<Vec<PersonId>>,
    /// Size of the population the node set was drawn from (>= nodes.len()).
    pub population_size: usize,
}

/// Directed edge weight over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeight {
    pub source: PersonId,
    pub target: PersonId,
    pub window: (i64, i64),
    pub weight: f64,
}

impl ContactNetwork {
    /// Builds the adjacency from a detected contact list.
    ///
    /// Contacts must reference nodes in `node_ids`; an exact duplicate
    /// contact is rejected rather than silently merged.
    pub fn build(contacts: &[Contact], node_ids: &[PersonId], population_size: usize) -> Result<Self> {
        let mut nodes = node_ids.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.len() != node_ids.len() {
            return Err(Error::invalid("duplicate node id"));
        }
        if population_size < nodes.len() {
            return Err(Error::invalid("population_size smaller than node set"));
        }
        let node_index: HashMap<PersonId, usize> =
            nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut pair_contacts: HashMap<PairKey, Vec<(i64, i64)>> = HashMap::new();
        for c in contacts {
            for id in [c.pair.a, c.pair.b] {
                if !node_index.contains_key(&id) {
                    return Err(Error::UnknownPerson(id.0));
                }
            }
            if c.pair.a == c.pair.b {
                return Err(Error::invalid("self-contact"));
            }
            pair_contacts.entry(c.pair).or_default().push((c.start, c.end));
        }
        let mut adjacency: Vec<Vec<PersonId>> = vec![Vec::new(); nodes.len()];
        for (pair, list) in pair_contacts.iter_mut() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!(
                    "duplicate contact for pair ({}, {})",
                    pair.a, pair.b
                )));
            }
            adjacency[node_index[&pair.a]].push(pair.b);
            adjacency[node_index[&pair.b]].push(pair.a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(ContactNetwork { nodes, node_index, pair_contacts, adjacency, population_size })
    }

    /// Node ids, ascending.
    pub fn nodes(&self) -> &[PersonId] {
        &self.nodes
    }

    pub fn contains(&self, id: PersonId) -> bool {
        self.node_index.contains_key(&id)
    }

    /// Time-sorted contact (start, end) list of a pair; empty if none.
    pub fn contacts_between(&self, u: PersonId, v: PersonId) -> &[(i64, i64)] {
        self.pair_contacts
            .get(&PairKey::new(u, v))
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    /// All partners of `u` regardless of window, ascending by id.
    pub fn partners(&self, u: PersonId) -> Result<&[PersonId]> {
        let idx = self.node_index.get(&u).ok_or(Error::UnknownPerson(u.0))?;
        Ok(&self.adjacency[*idx])
    }

    /// Neighbors of `u` with at least one contact starting in [s, t].
    ///
    /// The window is inclusive on both ends: the graph for [s, t] carries
    /// every contact opportunity during that period.
    pub fn neighbors(&self, u: PersonId, s: i64, t: i64) -> Result<Vec<PersonId>> {
        if s > t {
            return Err(Error::invalid("neighborhood window must have s <= t"));
        }
        let partners = self.partners(u)?;
        Ok(partners
            .iter()
            .copied()
            .filter(|&v| {
                self.contacts_between(u, v)
                    .iter()
                    .any(|&(start, _)| start >= s && start <= t)
            })
            .collect())
    }

    /// Number of contacts of the pair starting in [lo, hi).
    fn count_in(&self, u: PersonId, v: PersonId, lo: i64, hi: i64) -> usize {
        self.contacts_between(u, v)
            .iter()
            .filter(|&&(start, _)| start >= lo && start < hi)
            .count()
    }

    /// Probability that `v` gets infected from `u`, given `u` infected at `s`
    /// and observation until `t`: 1 - (1 - p_inf)^m over the m contacts
    /// starting while `u` is spreading, i.e. in [s + mu_is, min(t, s + mu_r)).
    pub fn edge_weight(
        &self,
        u: PersonId,
        v: PersonId,
        s: i64,
        t: i64,
        params: &DiffusionParams,
    ) -> f64 {
        let lo = s + params.mu_is_s;
        let hi = t.min(s + params.mu_r_s);
        if hi <= lo {
            return 0.0;
        }
        let m = self.count_in(u, v, lo, hi);
        1.0 - (1.0 - params.p_inf).powi(m as i32)
    }

    /// Expected total weight of edges crossing the random initial-infection
    /// cut on the whole-population graph for [0, t]: the sum over directed
    /// edges of p_init * (1 - p_init) * w.
    pub fn cut_statistic_full(&self, t: i64, params: &DiffusionParams) -> f64 {
        let mut pairs: Vec<&PairKey> = self.pair_contacts.keys().collect();
        pairs.sort_unstable();
        let factor = params.p_init * (1.0 - params.p_init);
        let mut total = 0.0;
        for pair in pairs {
            // Weights are symmetric here because both directions share the
            // infection time s = 0, so each pair contributes twice.
            let w = self.edge_weight(pair.a, pair.b, 0, t, params);
            total += 2.0 * factor * w;
        }
        total
    }

    /// Unbiased estimate of [`Self::cut_statistic_full`] from a network built
    /// on a Bernoulli(p_s) node sample: the sampled directed-edge sum scaled
    /// by 1 / p_s^2.
    pub fn cut_statistic_sampled(&self, t: i64, params: &DiffusionParams, p_s: f64) -> Result<f64> {
        if !(p_s > 0.0 && p_s <= 1.0) {
            return Err(Error::invalid("p_s must be in (0, 1]"));
        }
        Ok(self.cut_statistic_full(t, params) / (p_s * p_s))
    }

    /// Largest number of contacts any pair has.
    pub fn max_pair_contacts(&self) -> usize {
        self.pair_contacts.values().map(|v| v.len()).max().unwrap_or(0)
    }

    /// Per-pair contact rows (u, v, start, end) sorted for dumping.
    pub fn contact_rows(&self) -> Vec<(PersonId, PersonId, i64, i64)> {
        let mut rows: Vec<(PersonId, PersonId, i64, i64)> = self
            .pair_contacts
            .iter()
            .flat_map(|(pair, list)| list.iter().map(|&(s, e)| (pair.a, pair.b, s, e)))
            .collect();
        rows.sort_unstable();
        rows
    }
}
