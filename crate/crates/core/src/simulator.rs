//! Aggregate passenger loading along the line and the two objectives.
//!
//! Trains are processed in order; at each station the train first drops off
//! passengers, then boards from the waiting pool (new arrivals since the
//! previous train plus anyone that train left behind). When the pool exceeds
//! the free capacity every waiting passenger has the same chance to board, so
//! each destination boards the same fraction.

use std::io::Write;

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::model::{FormationId, Grid, HoldingPlan, LineConfig, OdCube, Timetable, TrainPlan};

/// Negative intermediate quantities above this magnitude are a logic fault.
pub const NEG_TOL: f64 = 1e-9;

/// Forward recursion for departure times. With `holding`, each intermediate
/// departure is shifted by the hold at that station, and the shift carries to
/// every downstream station.
pub fn propagate_timetable(plan: &TrainPlan, cfg: &LineConfig, holding: Option<&HoldingPlan>) -> Result<Timetable> {
    let n = cfg.n_stations();
    plan.check_shape(n)?;
    if cfg.run_times.len() + 1 != n {
        return Err(Error::malformed("run-time count does not match station count"));
    }
    let kk = plan.n_trains();
    if let Some(h) = holding {
        h.check_shape(kk, n)?;
    }
    let mut dep = Grid::zeros(kk, n);
    for k in 0..kk {
        let mut t = plan.first_departures[k];
        dep[(k, 0)] = t;
        for i in 1..n {
            t += cfg.run_times[i - 1];
            if i < n - 1 {
                t += plan.dwell_times[k][i - 1];
                if let Some(h) = holding {
                    t += h.holds[k][i - 1];
                }
            }
            dep[(k, i)] = t;
        }
    }
    Ok(Timetable { departures: dep })
}

/// Per-cell passenger flows produced by [`simulate_loading`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub timetable: Timetable,
    pub capacities: Vec<f64>,
    /// Passengers alighting from train k at station i.
    pub alighting: Grid,
    /// Passengers waiting (new + carried over) when train k leaves station i.
    pub demand: Grid,
    pub boarded: Grid,
    /// On board when train k leaves station i.
    pub onboard: Grid,
    pub left_behind: Grid,
    pub spare: Grid,
    pub od_demand: OdCube,
    pub od_boarded: OdCube,
    pub od_left_behind: OdCube,
    /// Passengers newly arrived in each train's window (excludes carry-over).
    pub fresh: Grid,
}

impl FlowResult {
    pub fn n_trains(&self) -> usize {
        self.timetable.n_trains()
    }

    pub fn n_stations(&self) -> usize {
        self.timetable.n_stations()
    }
}

fn check_nonneg(v: f64, what: &str, k: usize, i: usize) -> Result<f64> {
    if v < -NEG_TOL || !v.is_finite() {
        return Err(Error::Invariant(format!("{what} = {v} at train {} station {}", k + 1, i + 1)));
    }
    Ok(v.max(0.0))
}

/// Runs the loading recursion for a fixed timetable. The window of train `k`
/// at station `i` is `(t[k-1][i], t[k][i]]`, with the period start standing in
/// for the departure of a train before the first.
pub fn simulate_loading(timetable: &Timetable, formations: &[FormationId], cfg: &LineConfig, dm: &DemandModel) -> Result<FlowResult> {
    let kk = timetable.n_trains();
    let n = timetable.n_stations();
    if formations.len() != kk {
        return Err(Error::malformed(format!("{} formations for {kk} trains", formations.len())));
    }
    if n != cfg.n_stations() || n != dm.n_stations() {
        return Err(Error::malformed("timetable, line and demand disagree on station count"));
    }
    let caps = formations
        .iter()
        .map(|id| cfg.capacity(*id).ok_or_else(|| Error::malformed(format!("formation {id} not in catalog"))))
        .collect::<Result<Vec<_>>>()?;
    for k in 1..kk {
        for i in 0..n {
            if timetable.at(k, i) < timetable.at(k - 1, i) {
                return Err(Error::malformed(format!("train {} overtakes train {} at station {}", k + 1, k, i + 1)));
            }
        }
    }

    let t_s = dm.period().start;
    let mut fr = FlowResult {
        timetable: timetable.clone(),
        capacities: caps.clone(),
        alighting: Grid::zeros(kk, n),
        demand: Grid::zeros(kk, n),
        boarded: Grid::zeros(kk, n),
        onboard: Grid::zeros(kk, n),
        left_behind: Grid::zeros(kk, n),
        spare: Grid::zeros(kk, n),
        od_demand: OdCube::zeros(kk, n),
        od_boarded: OdCube::zeros(kk, n),
        od_left_behind: OdCube::zeros(kk, n),
        fresh: Grid::zeros(kk, n),
    };

    let mut carry = vec![vec![0.0; n]; n];
    for k in 0..kk {
        let cap = caps[k];
        let mut onboard = 0.0;
        for i in 0..n {
            let t0 = if k == 0 { t_s } else { timetable.at(k - 1, i) };
            let t1 = timetable.at(k, i);

            let alight: f64 = (0..i).map(|o| fr.od_boarded[(k, o, i)]).sum();
            let mut fresh = 0.0;
            let pool = fr.od_demand.cell_mut(k, i);
            for j in i + 1..n {
                let new = dm.interval_demand(i, j, t0, t1);
                fresh += new;
                pool[j] = new + carry[i][j];
            }
            let waiting: f64 = pool.iter().sum();
            let room = check_nonneg(cap - onboard + alight, "free capacity", k, i)?;
            let board = waiting.min(room);
            let ratio = if waiting > 0.0 { board / waiting } else { 0.0 };

            let pool = fr.od_demand.cell(k, i).to_vec();
            let boarded = fr.od_boarded.cell_mut(k, i);
            for j in i + 1..n {
                boarded[j] = pool[j] * ratio;
            }
            let left = fr.od_left_behind.cell_mut(k, i);
            let mut left_total = 0.0;
            for j in i + 1..n {
                left[j] = pool[j] - pool[j] * ratio;
                carry[i][j] = left[j];
                left_total += left[j];
            }

            onboard = check_nonneg(onboard + board - alight, "on-board load", k, i)?;
            if onboard > cap * (1.0 + 1e-12) + NEG_TOL {
                return Err(Error::Invariant(format!("load {onboard} exceeds capacity {cap} at train {} station {}", k + 1, i + 1)));
            }
            fr.alighting[(k, i)] = alight;
            fr.demand[(k, i)] = waiting;
            fr.boarded[(k, i)] = board;
            fr.left_behind[(k, i)] = left_total;
            fr.onboard[(k, i)] = onboard;
            fr.spare[(k, i)] = check_nonneg(cap - onboard, "spare capacity", k, i)?;
            fr.fresh[(k, i)] = fresh;
        }
    }
    Ok(fr)
}

/// Spare capacity summed over every departure (the terminus is an arrival,
/// not a departure).
pub fn spare_capacity_objective(fr: &FlowResult) -> f64 {
    let n = fr.n_stations();
    (0..fr.n_trains()).map(|k| fr.spare.row(k)[..n - 1].iter().sum::<f64>()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaitingTime {
    /// Waiting until the first train after arrival.
    pub first: f64,
    /// Extra waiting of passengers a full train left behind.
    pub extra: f64,
}

impl WaitingTime {
    pub fn total(&self) -> f64 {
        self.first + self.extra
    }
}

/// Total waiting time. Passengers left by train `k` wait
/// `t[k+1][i] - t[k][i]` more; those left by the last train contribute no
/// extra term (they count as violation mass instead).
pub fn waiting_time_objective(fr: &FlowResult, dm: &DemandModel) -> WaitingTime {
    let tt = &fr.timetable;
    let (kk, n) = (fr.n_trains(), fr.n_stations());
    let t_s = dm.period().start;
    let mut first = 0.0;
    for k in 0..kk {
        for i in 0..n {
            let t0 = if k == 0 { t_s } else { tt.at(k - 1, i) };
            let d = tt.at(k, i);
            for j in i + 1..n {
                first += dm.first_wait_integral(i, j, t0, d);
            }
        }
    }
    let mut extra = 0.0;
    for k in 0..kk.saturating_sub(1) {
        for i in 0..n {
            extra += fr.left_behind[(k, i)] * (tt.at(k + 1, i) - tt.at(k, i));
        }
    }
    WaitingTime { first, extra }
}

/// Mass of carried-over passengers that the next train cannot absorb, i.e.
/// who would wait for a third train. The last train's left-behind counts in
/// full.
pub fn two_train_violation(fr: &FlowResult) -> f64 {
    let (kk, n) = (fr.n_trains(), fr.n_stations());
    let mut v = 0.0;
    for k in 0..kk {
        for i in 0..n {
            let next = if k + 1 < kk { fr.boarded[(k + 1, i)] } else { 0.0 };
            v += (fr.left_behind[(k, i)] - next).max(0.0);
        }
    }
    v
}

/// Passengers still waiting after the last train, per station.
pub fn residual_left_behind(fr: &FlowResult) -> Vec<f64> {
    let k = fr.n_trains() - 1;
    fr.left_behind.row(k).to_vec()
}

/// Everything the optimizers and the harness need from one evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub flow: FlowResult,
    pub spare: f64,
    pub waiting: WaitingTime,
    pub violation: f64,
}

/// Propagate, load and score a plan in one call.
pub fn evaluate(plan: &TrainPlan, cfg: &LineConfig, dm: &DemandModel, holding: Option<&HoldingPlan>) -> Result<Evaluation> {
    let tt = propagate_timetable(plan, cfg, holding)?;
    let flow = simulate_loading(&tt, &plan.formations, cfg, dm)?;
    Ok(Evaluation {
        spare: spare_capacity_objective(&flow),
        waiting: waiting_time_objective(&flow, dm),
        violation: two_train_violation(&flow),
        flow,
    })
}

/// One row per (train, station) with departure time and the six per-cell
/// quantities. Stations and trains are one-based.
pub fn write_flow_csv<W: Write>(fr: &FlowResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["train", "station", "departure", "alighting", "demand", "boarded", "onboard", "left_behind", "spare"])?;
    for k in 0..fr.n_trains() {
        for i in 0..fr.n_stations() {
            w.write_record([
                (k + 1).to_string(),
                (i + 1).to_string(),
                format!("{:.4}", fr.timetable.at(k, i)),
                format!("{:.2}", fr.alighting[(k, i)]),
                format!("{:.2}", fr.demand[(k, i)]),
                format!("{:.2}", fr.boarded[(k, i)]),
                format!("{:.2}", fr.onboard[(k, i)]),
                format!("{:.2}", fr.left_behind[(k, i)]),
                format!("{:.2}", fr.spare[(k, i)]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
