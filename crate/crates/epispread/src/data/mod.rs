//! Dataset ingestion, projection and synthesis.

mod ingest;
mod synthetic;

pub use ingest::{densest_window_start, ingest_csv, ColumnMap, IngestOptions, IngestStats};
pub use synthetic::{avg_daily_colocations, generate_synthetic, SyntheticConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{PersonId, Point, Trajectory, Visit};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Metadata describing a stored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    /// UTC unix timestamp of dataset time zero.
    pub epoch_unix_s: i64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub horizon_end_s: i64,
    pub individual_count: usize,
    pub visit_count: usize,
}

/// Trajectories plus manifest and the external-id table: `id_names[i]` is the
/// external identifier of `PersonId(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub id_names: Vec<String>,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn population(&self) -> Vec<PersonId> {
        (0..self.id_names.len() as u32).map(PersonId).collect()
    }

    /// Writes the canonical dump: `visits.csv` (id,t_s,x_m,y_m) plus
    /// `manifest.json`.
    pub fn write_canonical(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        let mut w = csv::Writer::from_path(dir.join("visits.csv"))?;
        w.write_record(["id", "t_s", "x_m", "y_m"])?;
        for traj in &self.trajectories {
            let name = &self.id_names[traj.person.0 as usize];
            for v in traj.visits() {
                w.write_record([
                    name.clone(),
                    v.time.to_string(),
                    format!("{}", v.position.x),
                    format!("{}", v.position.y),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a canonical dump written by [`Dataset::write_canonical`].
    pub fn read_canonical(dir: &Path) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let mut reader = csv::Reader::from_path(dir.join("visits.csv"))?;
        let mut rows: Vec<(String, i64, f64, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let get = |i: usize| -> Result<&str> {
                record.get(i).ok_or_else(|| Error::invalid("short row in visits.csv"))
            };
            rows.push((
                get(0)?.to_string(),
                get(1)?.parse().map_err(|_| Error::invalid("bad t_s in visits.csv"))?,
                get(2)?.parse().map_err(|_| Error::invalid("bad x_m in visits.csv"))?,
                get(3)?.parse().map_err(|_| Error::invalid("bad y_m in visits.csv"))?,
            ));
        }
        build_dataset(manifest.clone(), rows.into_iter().map(|(id, t, x, y)| RawVisit {
            external_id: id,
            time_s: t,
            position: Point::new(x, y),
        }))
    }
}

/// A projected visit still keyed by its external identifier.
#[derive(Debug, Clone)]
pub(crate) struct RawVisit {
    pub external_id: String,
    pub time_s: i64,
    pub position: Point,
}

/// Assigns dense ids in sorted external-id order and builds trajectories.
///
/// Returns the dataset and leaves manifest counts corrected to what was
/// actually stored.
pub(crate) fn build_dataset(
    mut manifest: DatasetManifest,
    rows: impl Iterator<Item = RawVisit>,
) -> Result<Dataset> {
    let mut by_id: std::collections::BTreeMap<String, Vec<(i64, Point)>> =
        std::collections::BTreeMap::new();
    for r in rows {
        by_id.entry(r.external_id).or_default().push((r.time_s, r.position));
    }
    let mut id_names = Vec::with_capacity(by_id.len());
    let mut trajectories = Vec::with_capacity(by_id.len());
    let mut visit_count = 0;
    for (idx, (name, visits)) in by_id.into_iter().enumerate() {
        let person = PersonId(idx as u32);
        let visits: Vec<Visit> = visits
            .into_iter()
            .map(|(time, position)| Visit { person, time, position })
            .collect();
        let traj = Trajectory::build(visits, manifest.horizon_end_s)?;
        visit_count += traj.len();
        id_names.push(name);
        trajectories.push(traj);
    }
    manifest.individual_count = id_names.len();
    manifest.visit_count = visit_count;
    Ok(Dataset { manifest, id_names, trajectories })
}

/// Equirectangular projection about a fixed origin; adequate at county scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Projection {
    pub const METERS_PER_DEGREE: f64 = 111_320.0;

    pub fn project(&self, lat: f64, lon: f64) -> Point {
        let x = (lon - self.origin_lon)
            * Self::METERS_PER_DEGREE
            * self.origin_lat.to_radians().cos();
        let y = (lat - self.origin_lat) * Self::METERS_PER_DEGREE;
        Point::new(x, y)
    }
}

/// Great-circle distance in meters; the reference the planar projection is
/// checked against.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const EARTH_RADIUS_M: f64 = 6_371_000.0;
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}

/// Floors a unix timestamp to midnight UTC.
pub fn floor_to_midnight(unix_s: i64) -> i64 {
    unix_s.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY
}
