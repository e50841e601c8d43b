//! Domain types shared by every stage: the line, the study period, operating
//! bounds, and the two decision-variable containers (train plan and holding
//! plan).
//!
//! Station indices are zero-based everywhere inside the crate. Files written
//! for humans (CSV, JSON configs) use one-based station numbers and convert at
//! the boundary.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clock-time helpers. Times are minutes from midnight as `f64`.
pub mod clock {
    use serde::{de, Deserialize, Deserializer};

    /// Parses `HH:MM` or `HH:MM:SS(.fff)`.
    pub fn parse(s: &str) -> Option<f64> {
        let mut parts = s.trim().split(':');
        let h: f64 = parts.next()?.parse().ok()?;
        let m: f64 = parts.next()?.parse().ok()?;
        let sec: f64 = match parts.next() {
            Some(p) => p.parse().ok()?,
            None => 0.0,
        };
        if parts.next().is_some() || !(0.0..60.0).contains(&m) || !(0.0..60.0).contains(&sec) {
            return None;
        }
        Some(h * 60.0 + m + sec / 60.0)
    }

    /// Formats minutes-from-midnight as `HH:MM:SS.s`.
    pub fn format(minutes: f64) -> String {
        let tenths = (minutes * 600.0).round() as i64;
        let h = tenths / 36_000;
        let m = (tenths / 600) % 60;
        let s = (tenths % 600) as f64 / 10.0;
        format!("{h:02}:{m:02}:{s:04.1}")
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Minutes(f64),
        Text(String),
    }

    /// Accepts either a number of minutes or a clock string.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Minutes(m) => Ok(m),
            Raw::Text(s) => parse(&s).ok_or_else(|| de::Error::custom(format!("bad clock time {s:?}"))),
        }
    }

    pub fn deserialize_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(deserialize_with = "deserialize")] f64);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawPeriod {
    #[serde(deserialize_with = "clock::deserialize")]
    start: f64,
    #[serde(deserialize_with = "clock::deserialize")]
    end: f64,
    #[serde(default = "default_bin_width")]
    bin_width: f64,
    #[serde(default, deserialize_with = "clock::deserialize_opt")]
    last_departure: Option<f64>,
}

fn default_bin_width() -> f64 {
    5.0
}

/// The closed analysis window `[start, end]`, split into equal bins.
///
/// `last_departure` is the anchor of the last-train window: the last
/// first-station departure must fall in `[anchor - headway_max, anchor]`.
/// It defaults to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPeriod")]
pub struct StudyPeriod {
    pub start: f64,
    pub end: f64,
    pub bin_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_departure: Option<f64>,
}

impl TryFrom<RawPeriod> for StudyPeriod {
    type Error = Error;

    fn try_from(r: RawPeriod) -> Result<Self> {
        let mut p = StudyPeriod::new(r.start, r.end, r.bin_width)?;
        if let Some(a) = r.last_departure {
            p = p.with_last_departure(a)?;
        }
        Ok(p)
    }
}

impl StudyPeriod {
    pub fn new(start: f64, end: f64, bin_width: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::malformed(format!("period start {start} must precede end {end}")));
        }
        if !(bin_width > 0.0) {
            return Err(Error::malformed("bin width must be positive"));
        }
        let bins = (end - start) / bin_width;
        if (bins - bins.round()).abs() > 1e-9 {
            return Err(Error::malformed(format!(
                "bin width {bin_width} does not divide period length {}",
                end - start
            )));
        }
        Ok(StudyPeriod { start, end, bin_width, last_departure: None })
    }

    pub fn with_last_departure(mut self, anchor: f64) -> Result<Self> {
        if !(anchor > self.start && anchor <= self.end) {
            return Err(Error::malformed("last-departure anchor must lie in (start, end]"));
        }
        self.last_departure = Some(anchor);
        Ok(self)
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn last_departure_anchor(&self) -> f64 {
        self.last_departure.unwrap_or(self.end)
    }

    pub fn n_bins(&self) -> usize {
        (self.length() / self.bin_width).round() as usize
    }

    pub fn bin_start(&self, b: usize) -> f64 {
        self.start + b as f64 * self.bin_width
    }

    /// Bin containing `t`; the period end belongs to the last bin.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if t < self.start || t > self.end {
            return None;
        }
        let b = ((t - self.start) / self.bin_width).floor() as usize;
        Some(b.min(self.n_bins() - 1))
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FormationId(pub u32);

impl fmt::Display for FormationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One marshalling option. `selectable` formations are the ones the
/// formation optimizer may choose; the others exist for fixed strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationType {
    pub id: FormationId,
    pub car_count: u32,
    pub capacity: f64,
    #[serde(default = "yes")]
    pub selectable: bool,
}

fn yes() -> bool {
    true
}

impl FormationType {
    pub fn from_cars(id: u32, car_count: u32, per_car: f64) -> Self {
        FormationType { id: FormationId(id), car_count, capacity: car_count as f64 * per_car, selectable: true }
    }
}

/// A single-direction line. `hub_index` is one-based, as in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub station_names: Vec<String>,
    pub run_times: Vec<f64>,
    pub hub_index: usize,
    pub formation_catalog: Vec<FormationType>,
}

impl LineConfig {
    pub fn n_stations(&self) -> usize {
        self.station_names.len()
    }

    /// Zero-based hub station.
    pub fn hub(&self) -> usize {
        self.hub_index - 1
    }

    pub fn formation(&self, id: FormationId) -> Option<&FormationType> {
        self.formation_catalog.iter().find(|f| f.id == id)
    }

    pub fn capacity(&self, id: FormationId) -> Option<f64> {
        self.formation(id).map(|f| f.capacity)
    }

    pub fn selectable_formations(&self) -> Vec<&FormationType> {
        self.formation_catalog.iter().filter(|f| f.selectable).collect()
    }

    pub fn max_capacity(&self) -> f64 {
        self.formation_catalog.iter().map(|f| f.capacity).fold(0.0, f64::max)
    }

    pub fn total_run_time(&self) -> f64 {
        self.run_times.iter().sum()
    }

    /// Capacity lookup table, used on hot paths.
    pub fn capacity_map(&self) -> HashMap<FormationId, f64> {
        self.formation_catalog.iter().map(|f| (f.id, f.capacity)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationBounds {
    pub headway_min: f64,
    pub headway_max: f64,
    pub dwell_min: f64,
    pub dwell_max: f64,
    #[serde(default = "default_hold_max")]
    pub hold_max: f64,
    /// Largest shift of a held departure from its scheduled time, summed
    /// over the holds upstream. `None` means `hold_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_max: Option<f64>,
}

fn default_hold_max() -> f64 {
    1.0
}

impl OperationBounds {
    pub fn drift_limit(&self) -> f64 {
        self.drift_max.unwrap_or(self.hold_max)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.headway_min > 0.0 && self.headway_min <= self.headway_max) {
            return Err(Error::malformed("headway bounds must satisfy 0 < min <= max"));
        }
        if !(self.dwell_min >= 0.0 && self.dwell_min <= self.dwell_max) {
            return Err(Error::malformed("dwell bounds must satisfy 0 <= min <= max"));
        }
        if !(self.hold_max >= 0.0) {
            return Err(Error::malformed("hold bound must be non-negative"));
        }
        if let Some(d) = self.drift_max {
            if !(d >= 0.0) {
                return Err(Error::malformed("drift bound must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Stage-1 decision variables. `dwell_times[k][i - 1]` is the dwell of train
/// `k` at intermediate station `i` (zero-based `1..=N-2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub formations: Vec<FormationId>,
    pub first_departures: Vec<f64>,
    pub dwell_times: Vec<Vec<f64>>,
}

impl TrainPlan {
    pub fn n_trains(&self) -> usize {
        self.formations.len()
    }

    /// Plan in which every train shares one formation and one dwell.
    pub fn uniform(formation: FormationId, first_departures: Vec<f64>, dwell: f64, n_stations: usize) -> Self {
        let k = first_departures.len();
        TrainPlan {
            formations: vec![formation; k],
            first_departures,
            dwell_times: vec![vec![dwell; n_stations.saturating_sub(2)]; k],
        }
    }

    pub fn check_shape(&self, n_stations: usize) -> Result<()> {
        let k = self.n_trains();
        if k == 0 {
            return Err(Error::malformed("plan has no trains"));
        }
        if self.first_departures.len() != k {
            return Err(Error::malformed(format!(
                "plan has {k} formations but {} first departures",
                self.first_departures.len()
            )));
        }
        if self.dwell_times.len() != k {
            return Err(Error::malformed(format!("plan has {k} trains but {} dwell rows", self.dwell_times.len())));
        }
        let want = n_stations.saturating_sub(2);
        if let Some((row, r)) = self.dwell_times.iter().enumerate().find(|(_, r)| r.len() != want) {
            return Err(Error::malformed(format!("dwell row {row} has {} entries, expected {want}", r.len())));
        }
        Ok(())
    }
}

/// Stage-2 decision variables: `holds[k][i - 1]` shifts the departure of
/// train `k` from intermediate station `i`. Negative values mean leaving early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingPlan {
    pub holds: Vec<Vec<f64>>,
}

impl HoldingPlan {
    pub fn zeros(n_trains: usize, n_stations: usize) -> Self {
        HoldingPlan { holds: vec![vec![0.0; n_stations.saturating_sub(2)]; n_trains] }
    }

    pub fn max_abs(&self) -> f64 {
        self.holds.iter().flatten().fold(0.0, |m, h| m.max(h.abs()))
    }

    pub fn check_shape(&self, n_trains: usize, n_stations: usize) -> Result<()> {
        let want = n_stations.saturating_sub(2);
        if self.holds.len() != n_trains || self.holds.iter().any(|r| r.len() != want) {
            return Err(Error::malformed(format!("holding plan must be {n_trains} x {want}")));
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut g = Grid::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged rows");
            g.row_mut(r).copy_from_slice(row);
        }
        g
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

impl std::ops::Index<(usize, usize)> for Grid {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Grid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// `K x N x N` array indexed by (train, origin, destination).
#[derive(Debug, Clone, PartialEq)]
pub struct OdCube {
    trains: usize,
    stations: usize,
    data: Vec<f64>,
}

impl OdCube {
    pub fn zeros(trains: usize, stations: usize) -> Self {
        OdCube { trains, stations, data: vec![0.0; trains * stations * stations] }
    }

    /// Per-destination slice for one (train, origin) cell.
    pub fn cell(&self, k: usize, i: usize) -> &[f64] {
        let s = (k * self.stations + i) * self.stations;
        &self.data[s..s + self.stations]
    }

    pub fn cell_mut(&mut self, k: usize, i: usize) -> &mut [f64] {
        let s = (k * self.stations + i) * self.stations;
        &mut self.data[s..s + self.stations]
    }

    pub fn trains(&self) -> usize {
        self.trains
    }
}

impl std::ops::Index<(usize, usize, usize)> for OdCube {
    type Output = f64;
    fn index(&self, (k, i, j): (usize, usize, usize)) -> &f64 {
        &self.data[(k * self.stations + i) * self.stations + j]
    }
}

/// Departure matrix `K x N`. The last column holds arrival times at the
/// terminus.
#[derive(Debug, Clone, PartialEq)]
pub struct Timetable {
    pub departures: Grid,
}

impl Timetable {
    pub fn n_trains(&self) -> usize {
        self.departures.rows()
    }

    pub fn n_stations(&self) -> usize {
        self.departures.cols()
    }

    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.departures[(k, i)]
    }

    /// Headway matrix `(K-1) x N`: gap between train `k+1` and train `k`.
    pub fn headways(&self) -> Grid {
        let (kk, n) = (self.n_trains(), self.n_stations());
        let mut h = Grid::zeros(kk.saturating_sub(1), n);
        for k in 0..kk.saturating_sub(1) {
            for i in 0..n {
                h[(k, i)] = self.at(k + 1, i) - self.at(k, i);
            }
        }
        h
    }

    /// Trip time from first-station departure to terminus arrival.
    pub fn travel_times(&self) -> Vec<f64> {
        let last = self.n_stations() - 1;
        (0..self.n_trains()).map(|k| self.at(k, last) - self.at(k, 0)).collect()
    }
}
