//! Visit sequences and pairwise contact detection.
//!
//! An individual's visits define a piecewise-constant location function:
//! between two consecutive visits the individual holds the earlier visit's
//! position, and after the final visit they hold it until the horizon (or
//! until the last visit, see [`Presence`]). Contacts are maximal co-location
//! intervals (pairwise distance at most `d_max`) lasting at least `t_min`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense identifier for one individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PersonId(pub u32);

impl std::fmt::Display for PersonId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unordered pair of individuals, stored canonically as (min, max).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub a: PersonId,
    pub b: PersonId,
}

impl PairKey {
    pub fn new(u: PersonId, v: PersonId) -> Self {
        if u.0 <= v.0 {
            PairKey { a: u, b: v }
        } else {
            PairKey { a: v, b: u }
        }
    }

    pub fn other(&self, u: PersonId) -> PersonId {
        if u == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Planar position in meters (x east, y north) in the dataset's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One timestamped location record of one individual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub person: PersonId,
    /// Seconds since the dataset epoch.
    pub time: i64,
    pub position: Point,
}

/// Time-ordered visits of one individual plus the observation horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub person: PersonId,
    visits: Vec<Visit>,
    pub horizon_end: i64,
}

/// How long an individual is considered present after their final visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    /// Hold the last visit's location until the horizon end.
    #[default]
    HoldUntilHorizon,
    /// Presence ends at the last visit time.
    EndAtLastVisit,
}

impl Trajectory {
    /// Builds a trajectory from unordered visits.
    ///
    /// Visits are sorted by time; exact-duplicate timestamps are collapsed,
    /// keeping the record that came last in input order. An empty visit list
    /// is rejected, as is a horizon before the final visit.
    pub fn build(visits: Vec<Visit>, horizon_end: i64) -> Result<Self> {
        let person = match visits.first() {
            Some(v) => v.person,
            None => return Err(Error::EmptyVisits(u32::MAX)),
        };
        if visits.iter().any(|v| v.person != person) {
            return Err(Error::invalid("visits of one trajectory must share an individual id"));
        }
        if visits.iter().any(|v| v.time < 0) {
            return Err(Error::invalid("visit times must be non-negative"));
        }
        if visits.iter().any(|v| !v.position.is_finite()) {
            return Err(Error::invalid("visit positions must be finite"));
        }
        let mut visits = visits;
        // Stable sort keeps input order within equal timestamps, so keeping
        // the last record of each run implements last-wins deduplication.
        visits.sort_by_key(|v| v.time);
        let mut deduped: Vec<Visit> = Vec::with_capacity(visits.len());
        for v in visits {
            match deduped.last_mut() {
                Some(prev) if prev.time == v.time => *prev = v,
                _ => deduped.push(v),
            }
        }
        let last_time = deduped.last().unwrap().time;
        if horizon_end < last_time {
            return Err(Error::invalid(format!(
                "horizon_end {horizon_end} precedes last visit at {last_time}"
            )));
        }
        Ok(Trajectory { person, visits: deduped, horizon_end })
    }

    pub fn visits(&self) -> &[Visit] {
        &self.visits
    }

    pub fn first_time(&self) -> i64 {
        self.visits[0].time
    }

    pub fn last_time(&self) -> i64 {
        self.visits[self.visits.len() - 1].time
    }

    /// Number of deduplicated visits that were collapsed away at build time
    /// is not retained here; ingestion counts them separately.
    pub fn len(&self) -> usize {
        self.visits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visits.is_empty()
    }

    /// Right-continuous step-function location: the position of the last
    /// visit with time <= t, defined on [first visit, horizon_end).
    pub fn location_at(&self, t: i64) -> Option<Point> {
        if t < self.first_time() || t >= self.horizon_end {
            return None;
        }
        let idx = self.visits.partition_point(|v| v.time <= t);
        Some(self.visits[idx - 1].position)
    }

    /// Location under an explicit presence model; `EndAtLastVisit` shrinks
    /// the window to [first visit, last visit).
    pub fn location_at_with(&self, t: i64, presence: Presence) -> Option<Point> {
        match presence {
            Presence::HoldUntilHorizon => self.location_at(t),
            Presence::EndAtLastVisit => {
                if t >= self.last_time() {
                    None
                } else {
                    self.location_at(t)
                }
            }
        }
    }

    fn presence_end(&self, presence: Presence) -> i64 {
        match presence {
            Presence::HoldUntilHorizon => self.horizon_end,
            Presence::EndAtLastVisit => self.last_time(),
        }
    }
}

/// A maximal interval during which a pair stays within `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColocationInterval {
    pub pair: PairKey,
    pub start: i64,
    pub end: i64,
}

/// A qualifying co-location: one transmission opportunity at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub pair: PairKey,
    pub start: i64,
    pub end: i64,
}

impl Contact {
    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

/// Output of contact detection: all maximal co-location intervals and the
/// subset lasting at least `t_min`, both sorted by (start, pair).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactSet {
    pub intervals: Vec<ColocationInterval>,
    pub contacts: Vec<Contact>,
}

fn sort_key(pair: &PairKey, start: i64, end: i64) -> (i64, u32, u32, i64) {
    (start, pair.a.0, pair.b.0, end)
}

fn finish(mut intervals: Vec<ColocationInterval>, t_min: i64) -> ContactSet {
    intervals.retain(|iv| iv.end > iv.start);
    intervals.sort_by_key(|iv| sort_key(&iv.pair, iv.start, iv.end));
    let contacts = intervals
        .iter()
        .filter(|iv| iv.end - iv.start >= t_min)
        .map(|iv| Contact { pair: iv.pair, start: iv.start, end: iv.end })
        .collect();
    ContactSet { intervals, contacts }
}

fn validate_detection_input(trajectories: &[Trajectory], d_max: f64, t_min: i64) -> Result<()> {
    if !(d_max > 0.0) || !d_max.is_finite() {
        return Err(Error::invalid("d_max must be positive and finite"));
    }
    if t_min < 0 {
        return Err(Error::invalid("t_min must be non-negative"));
    }
    for traj in trajectories {
        if traj.visits.iter().any(|v| !v.position.is_finite()) {
            return Err(Error::invalid("non-finite coordinates in trajectory"));
        }
    }
    let mut ids: Vec<u32> = trajectories.iter().map(|t| t.person.0).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != trajectories.len() {
        return Err(Error::invalid("duplicate individual id in trajectory list"));
    }
    Ok(())
}

/// Detects all qualifying contacts over a population using a uniform spatial
/// grid of cell width `d_max`.
///
/// A pair can only come within `d_max` if their cells are identical or
/// adjacent, so examining the 3x3 neighborhood of every individual that moves
/// finds exactly the same contact set as the exhaustive scan.
pub fn detect_contacts(trajectories: &[Trajectory], d_max: f64, t_min: i64) -> Result<ContactSet> {
    detect_contacts_with(trajectories, d_max, t_min, Presence::default())
}

/// [`detect_contacts`] with an explicit presence model.
pub fn detect_contacts_with(
    trajectories: &[Trajectory],
    d_max: f64,
    t_min: i64,
    presence: Presence,
) -> Result<ContactSet> {
    validate_detection_input(trajectories, d_max, t_min)?;

    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    enum EventKind {
        // Moves are applied before departures at the same timestamp, so a
        // pair opened by an arrival that coincides with the partner's
        // departure is closed immediately and dropped as empty.
        Move,
        Depart,
    }

    struct Event {
        time: i64,
        kind: EventKind,
        person: usize,
        visit_idx: usize,
    }

    let mut events: Vec<Event> = Vec::new();
    for (pi, traj) in trajectories.iter().enumerate() {
        for (vi, v) in traj.visits.iter().enumerate() {
            events.push(Event { time: v.time, kind: EventKind::Move, person: pi, visit_idx: vi });
        }
        events.push(Event {
            time: traj.presence_end(presence),
            kind: EventKind::Depart,
            person: pi,
            visit_idx: 0,
        });
    }
    events.sort_by_key(|e| (e.time, e.kind, e.person));

    let cell_of = |p: &Point| -> (i64, i64) {
        ((p.x / d_max).floor() as i64, (p.y / d_max).floor() as i64)
    };

    let n = trajectories.len();
    let mut position: Vec<Option<(Point, (i64, i64))>> = vec![None; n];
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut open: HashMap<(usize, usize), i64> = HashMap::new();
    let mut partners: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut intervals: Vec<ColocationInterval> = Vec::new();

    let pair_of = |a: usize, b: usize| -> (usize, usize) {
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    };

    let mut close_pair = |open: &mut HashMap<(usize, usize), i64>,
                          partners: &mut Vec<Vec<usize>>,
                          intervals: &mut Vec<ColocationInterval>,
                          a: usize,
                          b: usize,
                          end: i64| {
        let key = pair_of(a, b);
        if let Some(start) = open.remove(&key) {
            partners[a].retain(|&x| x != b);
            partners[b].retain(|&x| x != a);
            intervals.push(ColocationInterval {
                pair: PairKey::new(trajectories[a].person, trajectories[b].person),
                start,
                end,
            });
        }
    };

    let mut i = 0;
    while i < events.len() {
        let t = events[i].time;
        let mut j = i;
        while j < events.len() && events[j].time == t {
            j += 1;
        }
        let group = &events[i..j];

        // Phase 1: apply every position change in the group, so distance
        // checks below see the state at time t (locations are
        // right-continuous).
        for ev in group.iter().filter(|e| e.kind == EventKind::Move) {
            let p = trajectories[ev.person].visits[ev.visit_idx].position;
            let new_cell = cell_of(&p);
            if let Some((_, old_cell)) = position[ev.person] {
                if old_cell != new_cell {
                    let bucket = grid.get_mut(&old_cell).unwrap();
                    bucket.retain(|&x| x != ev.person);
                }
            }
            match position[ev.person] {
                Some((_, old_cell)) if old_cell == new_cell => {}
                _ => grid.entry(new_cell).or_default().push(ev.person),
            }
            position[ev.person] = Some((p, new_cell));
        }

        // Phase 2: re-examine pairs around every mover.
        for ev in group.iter().filter(|e| e.kind == EventKind::Move) {
            let u = ev.person;
            let (pu, cu) = position[u].unwrap();
            for v in partners[u].clone() {
                let still_near = match position[v] {
                    Some((pv, _)) => pu.dist(&pv) <= d_max,
                    None => false,
                };
                if !still_near {
                    close_pair(&mut open, &mut partners, &mut intervals, u, v, t);
                }
            }
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(bucket) = grid.get(&(cu.0 + dx, cu.1 + dy)) else { continue };
                    for &v in bucket {
                        if v == u || open.contains_key(&pair_of(u, v)) {
                            continue;
                        }
                        let (pv, _) = position[v].unwrap();
                        if pu.dist(&pv) <= d_max {
                            open.insert(pair_of(u, v), t);
                            partners[u].push(v);
                            partners[v].push(u);
                        }
                    }
                }
            }
        }

        // Phase 3: departures close every open pair of the leaver.
        for ev in group.iter().filter(|e| e.kind == EventKind::Depart) {
            let u = ev.person;
            for v in partners[u].clone() {
                close_pair(&mut open, &mut partners, &mut intervals, u, v, t);
            }
            if let Some((_, cell)) = position[u].take() {
                grid.get_mut(&cell).unwrap().retain(|&x| x != u);
            }
        }

        i = j;
    }
    debug_assert!(open.is_empty());

    Ok(finish(intervals, t_min))
}

/// Reference scan: evaluates every pair at every event time of the union of
/// the two trajectories. O(n^2 * events); intended for tests and small inputs.
pub fn detect_contacts_brute_force(
    trajectories: &[Trajectory],
    d_max: f64,
    t_min: i64,
) -> Result<ContactSet> {
    detect_contacts_brute_force_with(trajectories, d_max, t_min, Presence::default())
}

/// [`detect_contacts_brute_force`] with an explicit presence model.
pub fn detect_contacts_brute_force_with(
    trajectories: &[Trajectory],
    d_max: f64,
    t_min: i64,
    presence: Presence,
) -> Result<ContactSet> {
    validate_detection_input(trajectories, d_max, t_min)?;

    let mut intervals: Vec<ColocationInterval> = Vec::new();
    for (i, tu) in trajectories.iter().enumerate() {
        for tv in trajectories.iter().skip(i + 1) {
            let window_start = tu.first_time().max(tv.first_time());
            let window_end = tu.presence_end(presence).min(tv.presence_end(presence));
            if window_end <= window_start {
                continue;
            }
            let mut times: Vec<i64> = tu
                .visits
                .iter()
                .chain(tv.visits.iter())
                .map(|v| v.time)
                .filter(|&t| t >= window_start && t < window_end)
                .collect();
            times.push(window_start);
            times.sort_unstable();
            times.dedup();

            let mut open_start: Option<i64> = None;
            for &t in &times {
                let near = match (
                    tu.location_at_with(t, presence),
                    tv.location_at_with(t, presence),
                ) {
                    (Some(pu), Some(pv)) => pu.dist(&pv) <= d_max,
                    _ => false,
                };
                match (near, open_start) {
                    (true, None) => open_start = Some(t),
                    (false, Some(s)) => {
                        intervals.push(ColocationInterval {
                            pair: PairKey::new(tu.person, tv.person),
                            start: s,
                            end: t,
                        });
                        open_start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = open_start {
                intervals.push(ColocationInterval {
                    pair: PairKey::new(tu.person, tv.person),
                    start: s,
                    end: window_end,
                });
            }
        }
    }

    Ok(finish(intervals, t_min))
}

/// Writes contacts as CSV with columns `u,v,start_s,end_s`.
///
/// When `id_names` is given it maps `PersonId(i)` to `id_names[i]`.
pub fn write_contacts_csv<W: std::io::Write>(
    contacts: &[Contact],
    id_names: Option<&[String]>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["u", "v", "start_s", "end_s"])?;
    let name = |id: PersonId| -> String {
        match id_names {
            Some(names) => names[id.0 as usize].clone(),
            None => id.0.to_string(),
        }
    };
    for c in contacts {
        w.write_record([
            name(c.pair.a),
            name(c.pair.b),
            c.start.to_string(),
            c.end.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
