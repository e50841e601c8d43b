//! Structural validation of lines and train plans. Validation never aborts on
//! a broken invariant; it lists every one it finds.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LineConfig, OperationBounds, StudyPeriod, TrainPlan};
use crate::simulator::propagate_timetable;

/// Slack used when comparing times against bounds.
pub const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooFewStations,
    RunTimeCount,
    NonPositiveRunTime,
    HubOutOfRange,
    EmptyCatalog,
    NonPositiveCapacity,
    DuplicateFormation,
    UnknownFormation,
    FirstDepartureWindow,
    LastDepartureWindow,
    HeadwayOutOfBounds,
    DwellOutOfBounds,
    DeparturesNotIncreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Zero-based train index, when the violation belongs to one train.
    pub train: Option<usize>,
    /// Zero-based station index, when it belongs to one station.
    pub station: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.train, self.station) {
            (Some(k), Some(i)) => write!(f, "train {} station {}: {}", k + 1, i + 1, self.message),
            (Some(k), None) => write!(f, "train {}: {}", k + 1, self.message),
            (None, Some(i)) => write!(f, "station {}: {}", i + 1, self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, train: Option<usize>, station: Option<usize>, message: String) {
        self.violations.push(Violation { kind, train, station, message });
    }

    /// Converts a non-empty report into an error listing the first few
    /// violations.
    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            return Ok(());
        }
        let n = self.violations.len();
        let head: Vec<String> = self.violations.iter().take(5).map(|v| v.to_string()).collect();
        Err(Error::Infeasible(format!("{n} violation(s): {}", head.join("; "))))
    }
}

pub fn validate_line(cfg: &LineConfig) -> ValidationReport {
    use ViolationKind::*;
    let mut r = ValidationReport::default();
    let n = cfg.n_stations();
    if n < 2 {
        r.push(TooFewStations, None, None, format!("line needs at least 2 stations, has {n}"));
    }
    if cfg.run_times.len() + 1 != n {
        r.push(RunTimeCount, None, None, format!("{n} stations need {} run times, got {}", n.saturating_sub(1), cfg.run_times.len()));
    }
    for (i, &t) in cfg.run_times.iter().enumerate() {
        if !(t > 0.0 && t.is_finite()) {
            r.push(NonPositiveRunTime, None, Some(i), format!("non-positive run time {t}"));
        }
    }
    if cfg.hub_index < 1 || cfg.hub_index > n {
        r.push(HubOutOfRange, None, None, format!("hub index {} outside 1..={n}", cfg.hub_index));
    }
    if cfg.formation_catalog.is_empty() {
        r.push(EmptyCatalog, None, None, "formation catalog is empty".into());
    }
    for (a, f) in cfg.formation_catalog.iter().enumerate() {
        if !(f.capacity > 0.0 && f.capacity.is_finite()) {
            r.push(NonPositiveCapacity, None, None, format!("formation {} has capacity {}", f.id, f.capacity));
        }
        if cfg.formation_catalog[..a].iter().any(|g| g.id == f.id) {
            r.push(DuplicateFormation, None, None, format!("formation id {} appears twice", f.id));
        }
    }
    r
}

/// Checks formation membership, the first/last departure windows, dwell
/// bounds, and the headway range at every station of the propagated
/// timetable.
pub fn validate_plan(
    plan: &TrainPlan,
    cfg: &LineConfig,
    bounds: &OperationBounds,
    period: &StudyPeriod,
) -> Result<ValidationReport> {
    use ViolationKind::*;
    plan.check_shape(cfg.n_stations())?;
    let mut r = ValidationReport::default();
    let kk = plan.n_trains();

    for (k, id) in plan.formations.iter().enumerate() {
        if cfg.formation(*id).is_none() {
            r.push(UnknownFormation, Some(k), None, format!("formation {id} not in catalog"));
        }
    }

    let first = plan.first_departures[0];
    if first < period.start - TIME_TOL || first > period.start + bounds.headway_max + TIME_TOL {
        r.push(FirstDepartureWindow, Some(0), Some(0), format!("first departure {first:.4} outside the opening window"));
    }
    let anchor = period.last_departure_anchor();
    let last = plan.first_departures[kk - 1];
    if last < anchor - bounds.headway_max - TIME_TOL || last > anchor + TIME_TOL {
        r.push(LastDepartureWindow, Some(kk - 1), Some(0), format!("last departure {last:.4} outside the closing window"));
    }

    for (k, row) in plan.dwell_times.iter().enumerate() {
        for (c, &d) in row.iter().enumerate() {
            if d < bounds.dwell_min - TIME_TOL || d > bounds.dwell_max + TIME_TOL {
                r.push(DwellOutOfBounds, Some(k), Some(c + 1), format!("dwell {d:.4} outside [{}, {}]", bounds.dwell_min, bounds.dwell_max));
            }
        }
    }

    let tt = propagate_timetable(plan, cfg, None)?;
    let h = tt.headways();
    for k in 0..h.rows() {
        for i in 0..h.cols() {
            let gap = h[(k, i)];
            if gap <= 0.0 {
                r.push(DeparturesNotIncreasing, Some(k), Some(i), format!("train {} does not follow train {}", k + 2, k + 1));
            }
            if gap < bounds.headway_min - TIME_TOL || gap > bounds.headway_max + TIME_TOL {
                r.push(HeadwayOutOfBounds, Some(k), Some(i), format!("headway {gap:.4} outside [{}, {}]", bounds.headway_min, bounds.headway_max));
            }
        }
    }
    Ok(r)
}

/// Window `[lo, hi]` that first-station departure `k` may occupy given the
/// opening window, the closing window and the headway range. Errors when any
/// window is empty, i.e. no plan with `n_trains` trains can exist.
pub fn departure_windows(n_trains: usize, bounds: &OperationBounds, period: &StudyPeriod) -> Result<Vec<(f64, f64)>> {
    bounds.check()?;
    if n_trains == 0 {
        return Err(Error::malformed("train count must be positive"));
    }
    let (open_lo, open_hi) = (period.start, period.start + bounds.headway_max);
    let anchor = period.last_departure_anchor();
    let (close_lo, close_hi) = (anchor - bounds.headway_max, anchor);
    let last = n_trains - 1;
    let mut out = Vec::with_capacity(n_trains);
    for k in 0..n_trains {
        let (ahead, behind) = (k as f64, (last - k) as f64);
        let lo = (open_lo + ahead * bounds.headway_min).max(close_lo - behind * bounds.headway_max);
        let hi = (open_hi + ahead * bounds.headway_max).min(close_hi - behind * bounds.headway_min);
        if lo > hi + TIME_TOL {
            return Err(Error::infeasible(format!(
                "{n_trains} trains cannot satisfy the opening window [{open_lo:.2}, {open_hi:.2}], the closing window \
                 [{close_lo:.2}, {close_hi:.2}] and headways in [{}, {}] at the first station",
                bounds.headway_min, bounds.headway_max
            )));
        }
        out.push((lo, hi.max(lo)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FormationId, FormationType};

    fn line(run_times: Vec<f64>) -> LineConfig {
        LineConfig {
            station_names: (0..=run_times.len()).map(|i| format!("S{i}")).collect(),
            run_times,
            hub_index: 1,
            formation_catalog: vec![FormationType::from_cars(4, 4, 240.0), FormationType::from_cars(8, 8, 240.0)],
        }
    }

    fn bounds(min: f64, max: f64) -> OperationBounds {
        OperationBounds { headway_min: min, headway_max: max, dwell_min: 0.5, dwell_max: 0.75, hold_max: 1.0, drift_max: None }
    }

    #[test]
    fn minimal_line_is_valid() {
        assert!(validate_line(&line(vec![1.0])).is_valid());
    }

    #[test]
    fn zero_run_time_is_reported() {
        let r = validate_line(&line(vec![1.0, 0.0, 2.0]));
        assert_eq!(r.count(ViolationKind::NonPositiveRunTime), 1);
        assert_eq!(r.violations[0].station, Some(1));
    }

    #[test]
    fn bad_hub_and_catalog_reported_together() {
        let mut cfg = line(vec![1.0]);
        cfg.hub_index = 5;
        cfg.formation_catalog[0].capacity = 0.0;
        let r = validate_line(&cfg);
        assert_eq!(r.count(ViolationKind::HubOutOfRange), 1);
        assert_eq!(r.count(ViolationKind::NonPositiveCapacity), 1);
    }

    #[test]
    fn two_train_boundary_plan_is_valid() {
        let cfg = line(vec![1.0, 1.0]);
        let period = StudyPeriod::new(0.0, 10.0, 5.0).unwrap();
        let plan = TrainPlan::uniform(FormationId(4), vec![0.0, 10.0], 0.5, 3);
        let r = validate_plan(&plan, &cfg, &bounds(1.0, 10.0), &period).unwrap();
        assert!(r.is_valid(), "{r:?}");
    }

    #[test]
    fn short_gap_violates_headway_at_every_station() {
        let cfg = line(vec![1.0, 2.0, 1.5]);
        let period = StudyPeriod::new(0.0, 10.0, 5.0).unwrap().with_last_departure(4.0).unwrap();
        let plan = TrainPlan::uniform(FormationId(4), vec![0.0, 4.0], 0.5, 4);
        let r = validate_plan(&plan, &cfg, &bounds(4.85, 5.15), &period).unwrap();
        assert_eq!(r.count(ViolationKind::HeadwayOutOfBounds), 4);
        assert_eq!(r.violations.len(), 4, "{r:?}");
    }

    #[test]
    fn malformed_plan_is_an_error() {
        let cfg = line(vec![1.0, 1.0]);
        let period = StudyPeriod::new(0.0, 10.0, 5.0).unwrap();
        let mut plan = TrainPlan::uniform(FormationId(4), vec![0.0, 10.0], 0.5, 3);
        plan.dwell_times[1].push(0.5);
        assert!(validate_plan(&plan, &cfg, &bounds(1.0, 10.0), &period).is_err());
    }

    #[test]
    fn unknown_formation_and_dwell_reported() {
        let cfg = line(vec![1.0, 1.0]);
        let period = StudyPeriod::new(0.0, 10.0, 5.0).unwrap();
        let mut plan = TrainPlan::uniform(FormationId(4), vec![0.0, 10.0], 0.5, 3);
        plan.formations[1] = FormationId(6);
        plan.dwell_times[0][0] = 0.9;
        plan.dwell_times[1][0] = 0.9;
        let r = validate_plan(&plan, &cfg, &bounds(1.0, 10.0), &period).unwrap();
        assert_eq!(r.count(ViolationKind::UnknownFormation), 1);
        assert_eq!(r.count(ViolationKind::DwellOutOfBounds), 2);
    }

    #[test]
    fn departure_windows_detect_infeasible_fleet() {
        let b = bounds(4.85, 5.15);
        let open = StudyPeriod::new(450.0, 550.0, 5.0).unwrap();
        assert!(matches!(departure_windows(18, &b, &open), Err(Error::Infeasible(_))));
        let anchored = open.with_last_departure(535.0).unwrap();
        let w = departure_windows(18, &b, &anchored).unwrap();
        assert!(w.iter().all(|(lo, hi)| lo <= hi));
        assert!(departure_windows(20, &b, &open).is_ok());
    }
}
