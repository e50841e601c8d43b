//! Strategy comparison: builds the plans of each operating strategy, replays
//! them against scheduled or delayed demand and collects the metrics.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BaselineSpec, Scenario};
use crate::demand::{DelayScenario, DemandModel};
use crate::error::{Error, Result};
use crate::ga::{GaParams, GenerationStats};
use crate::model::{FormationId, Grid, HoldingPlan, StudyPeriod, TrainPlan};
use crate::simulator::{evaluate, FlowResult};
use crate::stage1::optimize_formation_and_timetable;
use crate::stage2::optimize_holding;

pub const DEFAULT_WARMUP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    S1,
    S2,
    S3,
    FS,
}

impl StrategyKind {
    pub fn optimizes_formation(self) -> bool {
        matches!(self, StrategyKind::S3 | StrategyKind::FS)
    }

    pub fn holds(self) -> bool {
        matches!(self, StrategyKind::S2 | StrategyKind::FS)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::S1 => "S1",
            StrategyKind::S2 => "S2",
            StrategyKind::S3 => "S3",
            StrategyKind::FS => "FS",
        })
    }
}

/// Two-level first-station headways: `peak_gaps` gaps of `peak`, then
/// `offpeak` for the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedHeadways {
    pub peak: f64,
    pub offpeak: f64,
    pub peak_gaps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub delay_enabled: bool,
    pub fixed_formation: Option<FormationId>,
    pub fixed_headways: Option<FixedHeadways>,
    /// Scheduled dwell of the fixed plans.
    pub fixed_dwell: Option<f64>,
}

impl StrategySpec {
    /// The standard variant of `kind`, with the fixed parts taken from the
    /// baseline when the strategy needs them.
    pub fn standard(kind: StrategyKind, delay_enabled: bool, baseline: &BaselineSpec) -> Self {
        if kind.optimizes_formation() {
            StrategySpec { kind, delay_enabled, fixed_formation: None, fixed_headways: None, fixed_dwell: None }
        } else {
            StrategySpec {
                kind,
                delay_enabled,
                fixed_formation: Some(baseline.formation),
                fixed_headways: Some(FixedHeadways { peak: baseline.peak_headway, offpeak: baseline.offpeak_headway, peak_gaps: baseline.peak_gaps }),
                fixed_dwell: Some(baseline.dwell),
            }
        }
    }

    /// S1-N, FS-N, S1, S2, S3, FS in report order.
    pub fn six_cases(baseline: &BaselineSpec) -> Vec<Self> {
        use StrategyKind::*;
        vec![
            Self::standard(S1, false, baseline),
            Self::standard(FS, false, baseline),
            Self::standard(S1, true, baseline),
            Self::standard(S2, true, baseline),
            Self::standard(S3, true, baseline),
            Self::standard(FS, true, baseline),
        ]
    }

    pub fn label(&self) -> String {
        if self.delay_enabled {
            self.kind.to_string()
        } else {
            format!("{}-N", self.kind)
        }
    }

    pub fn check(&self) -> Result<()> {
        let fixed = self.fixed_formation.is_some() && self.fixed_headways.is_some();
        let free = self.fixed_formation.is_none() && self.fixed_headways.is_none();
        if self.kind.optimizes_formation() && !free {
            return Err(Error::malformed(format!("{} optimizes formation and headways; fixed values are not allowed", self.kind)));
        }
        if !self.kind.optimizes_formation() && !fixed {
            return Err(Error::malformed(format!("{} needs a fixed formation and fixed headways", self.kind)));
        }
        Ok(())
    }
}

/// Seeds of one experiment cell, derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub stage1: u64,
    pub stage2: u64,
    pub delay: u64,
}

impl CellSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        CellSeeds { stage1: r.gen(), stage2: r.gen(), delay: r.gen() }
    }
}

/// Departures `t_s, t_s + g_1, ...` of a two-level headway pattern.
pub fn fixed_departures(h: &FixedHeadways, n_trains: usize, period: &StudyPeriod) -> Result<Vec<f64>> {
    let mut t = period.start;
    let mut deps = Vec::with_capacity(n_trains);
    for k in 0..n_trains {
        if k > 0 {
            t += if k <= h.peak_gaps { h.peak } else { h.offpeak };
        }
        deps.push(t);
    }
    if t > period.end + 1e-9 {
        return Err(Error::infeasible(format!("fixed headways place the last departure after the period end ({t:.2} > {:.2})", period.end)));
    }
    Ok(deps)
}

#[derive(Debug, Clone)]
pub struct StrategyPlan {
    pub plan: TrainPlan,
    pub holding: Option<HoldingPlan>,
    pub stage1_history: Vec<GenerationStats>,
    pub stage2_history: Vec<GenerationStats>,
}

fn stage1_params(sc: &Scenario, seeds: CellSeeds) -> GaParams {
    sc.config.ga.with_seed(seeds.stage1)
}

/// Plan without holding: the fixed baseline or a stage-1 optimization
/// against scheduled demand.
pub fn base_plan(spec: &StrategySpec, sc: &Scenario, seeds: CellSeeds) -> Result<(TrainPlan, Vec<GenerationStats>)> {
    spec.check()?;
    let c = &sc.config;
    if spec.kind.optimizes_formation() {
        let out = optimize_formation_and_timetable(&c.line, &sc.scheduled, &c.bounds, &c.period, c.n_trains, &stage1_params(sc, seeds))?;
        Ok((out.plan, out.history))
    } else {
        let h = spec.fixed_headways.expect("checked");
        let f = spec.fixed_formation.expect("checked");
        if c.line.capacity(f).is_none() {
            return Err(Error::malformed(format!("formation {f} not in catalog")));
        }
        let deps = fixed_departures(&h, c.n_trains, &c.period)?;
        let dwell = spec.fixed_dwell.unwrap_or(c.baseline.dwell);
        Ok((TrainPlan::uniform(f, deps, dwell, c.line.n_stations()), Vec::new()))
    }
}

/// Adds holding on top of `plan` when the strategy uses it.
pub fn finish_plan(spec: &StrategySpec, sc: &Scenario, plan: TrainPlan, stage1_history: Vec<GenerationStats>, realized: &DemandModel, seeds: CellSeeds) -> Result<StrategyPlan> {
    let c = &sc.config;
    if spec.kind.holds() {
        let out = optimize_holding(&plan, &c.line, realized, &c.bounds, &c.stage2_params().with_seed(seeds.stage2))?;
        Ok(StrategyPlan { plan, holding: Some(out.holding), stage1_history, stage2_history: out.history })
    } else {
        Ok(StrategyPlan { plan, holding: None, stage1_history, stage2_history: Vec::new() })
    }
}

/// Builds the full plan of one strategy for one seed.
pub fn build_strategy_plan(spec: &StrategySpec, sc: &Scenario, realized: &DemandModel, seeds: CellSeeds) -> Result<StrategyPlan> {
    let (plan, hist) = base_plan(spec, sc, seeds)?;
    finish_plan(spec, sc, plan, hist, realized, seeds)
}

/// Demand a strategy is evaluated against.
pub fn realized_demand(spec: &StrategySpec, sc: &Scenario, seeds: CellSeeds) -> Result<(DemandModel, Option<DelayScenario>)> {
    if spec.delay_enabled {
        let d = sc.sample_delays(seeds.delay)?;
        Ok((sc.realize(&d)?, Some(d)))
    } else {
        Ok((sc.scheduled.clone(), None))
    }
}

/// One time bin of a run. Waits are line-wide and attributed to the
/// bin of arrival; demand and boarded counts are at the hub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinMetric {
    pub start: f64,
    pub hub_demand: f64,
    pub hub_boarded: f64,
    /// Passengers arriving in the bin who had a train left to catch.
    pub passengers: f64,
    pub total_wait: f64,
    pub average_wait: f64,
    /// No passengers arrived in the bin; `average_wait` is 0 by convention.
    pub empty: bool,
}

/// Expected extra wait of a passenger first eligible for train `k` at
/// station `i`, under uniform boarding among everyone waiting.
fn extra_wait_table(fr: &FlowResult) -> Grid {
    let (kk, n) = (fr.n_trains(), fr.n_stations());
    let mut e = Grid::zeros(kk, n);
    for i in 0..n {
        for k in (0..kk.saturating_sub(1)).rev() {
            let waiting = fr.demand[(k, i)];
            let q = if waiting > 0.0 { fr.left_behind[(k, i)] / waiting } else { 0.0 };
            let h = fr.timetable.at(k + 1, i) - fr.timetable.at(k, i);
            e[(k, i)] = q * (h + e[(k + 1, i)]);
        }
    }
    e
}

/// Per-bin hub demand, hub boarding and arrival-attributed waiting for the
/// bins that start at or after `period.start + warmup`.
pub fn compute_bin_metrics(fr: &FlowResult, dm: &DemandModel, period: &StudyPeriod, warmup: f64, hub: usize) -> Vec<BinMetric> {
    let (kk, n) = (fr.n_trains(), fr.n_stations());
    let tt = &fr.timetable;
    let extra = extra_wait_table(fr);
    let from = period.start + warmup - 1e-9;
    let mut rows = Vec::new();
    for b in 0..period.n_bins() {
        let (lo, hi) = (period.bin_start(b), period.bin_start(b) + period.bin_width);
        if lo < from {
            continue;
        }
        let mut passengers = 0.0;
        let mut wait = 0.0;
        for i in 0..n {
            for k in 0..kk {
                let w0 = if k == 0 { period.start } else { tt.at(k - 1, i) };
                let d = tt.at(k, i);
                let (a, c) = (lo.max(w0), hi.min(d));
                if c <= a {
                    continue;
                }
                for j in i + 1..n {
                    let m = dm.interval_demand(i, j, a, c);
                    passengers += m;
                    wait += dm.wait_between(i, j, a, c, d) + m * extra[(k, i)];
                }
            }
        }
        rows.push(BinMetric {
            start: lo,
            hub_demand: 0.0,
            hub_boarded: 0.0,
            passengers,
            total_wait: wait,
            average_wait: if passengers > 0.0 { wait / passengers } else { 0.0 },
            empty: passengers <= 0.0,
        });
    }
    fill_hub_counts(&mut rows, fr, dm, period, hub);
    rows
}

fn fill_hub_counts(rows: &mut [BinMetric], fr: &FlowResult, dm: &DemandModel, period: &StudyPeriod, hub: usize) {
    let n = fr.n_stations();
    for r in rows.iter_mut() {
        let hi = r.start + period.bin_width;
        r.hub_demand = (hub + 1..n).map(|j| dm.interval_demand(hub, j, r.start, hi)).sum();
        r.hub_boarded = (0..fr.n_trains())
            .filter(|&k| {
                let t = fr.timetable.at(k, hub);
                t >= r.start && t < hi
            })
            .map(|k| fr.boarded[(k, hub)])
            .sum();
    }
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Everything measured for one (strategy, seed) pair.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub label: String,
    pub seed: u64,
    pub plan: TrainPlan,
    pub holding: Option<HoldingPlan>,
    pub delays: Option<DelayScenario>,
    pub z1: f64,
    pub z2: f64,
    pub t1: f64,
    pub t2: f64,
    pub violation: f64,
    pub bins: Vec<BinMetric>,
    /// Line-wide average wait over post-warmup arrivals.
    pub average_wait: f64,
    /// Spread of per-bin average waits over non-empty post-warmup bins.
    pub bin_wait_std: f64,
    pub left_behind: Grid,
    /// Left-behind mass summed over cells departing after the warmup.
    pub left_behind_mass: f64,
    pub travel_times: Vec<f64>,
    pub residual: Vec<f64>,
    pub departures: Grid,
    pub stage1_history: Vec<GenerationStats>,
    pub stage2_history: Vec<GenerationStats>,
}

/// Simulates a finished plan and gathers the metrics.
pub fn measure(label: &str, seed: u64, sp: StrategyPlan, sc: &Scenario, realized: &DemandModel, delays: Option<DelayScenario>, warmup: f64) -> Result<CellResult> {
    let c = &sc.config;
    let ev = evaluate(&sp.plan, &c.line, realized, sp.holding.as_ref())?;
    let fr = &ev.flow;
    let bins = compute_bin_metrics(fr, realized, &c.period, warmup, c.line.hub());
    let passengers: f64 = bins.iter().map(|b| b.passengers).sum();
    let wait: f64 = bins.iter().map(|b| b.total_wait).sum();
    let averages: Vec<f64> = bins.iter().filter(|b| !b.empty).map(|b| b.average_wait).collect();
    let from = c.period.start + warmup - 1e-9;
    let mut lb_mass = 0.0;
    for k in 0..fr.n_trains() {
        for i in 0..fr.n_stations() {
            if fr.timetable.at(k, i) >= from {
                lb_mass += fr.left_behind[(k, i)];
            }
        }
    }
    Ok(CellResult {
        label: label.to_string(),
        seed,
        z1: ev.spare,
        z2: ev.waiting.total(),
        t1: ev.waiting.first,
        t2: ev.waiting.extra,
        violation: ev.violation,
        average_wait: if passengers > 0.0 { wait / passengers } else { 0.0 },
        bin_wait_std: std_dev(&averages),
        left_behind: fr.left_behind.clone(),
        left_behind_mass: lb_mass,
        travel_times: fr.timetable.travel_times(),
        residual: crate::simulator::residual_left_behind(fr),
        departures: fr.timetable.departures.clone(),
        bins,
        plan: sp.plan,
        holding: sp.holding,
        delays,
        stage1_history: sp.stage1_history,
        stage2_history: sp.stage2_history,
    })
}

/// Aggregate of one strategy over all seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub average_wait: f64,
    pub average_wait_seed_std: f64,
    /// `(reference - average_wait) / reference` against S1 or S1-N.
    pub improvement: Option<f64>,
    /// Mean over seeds of the per-bin wait spread.
    pub bin_wait_std: f64,
    pub travel_time: f64,
    pub travel_time_std: f64,
    pub left_behind: f64,
    pub z1: f64,
    pub z2: f64,
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub labels: Vec<String>,
    pub seeds: Vec<u64>,
    pub warmup: f64,
    pub period: StudyPeriod,
    /// `cells[s][r]`: strategy `s`, seed index `r`.
    pub cells: Vec<Vec<CellResult>>,
    pub summary: Vec<SummaryRow>,
    pub config_json: String,
}

fn summarize(labels: &[String], cells: &[Vec<CellResult>]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = labels
        .iter()
        .zip(cells)
        .map(|(label, runs)| {
            let waits: Vec<f64> = runs.iter().map(|c| c.average_wait).collect();
            let travel: Vec<f64> = runs.iter().flat_map(|c| c.travel_times.iter().copied()).collect();
            let pick = |f: fn(&CellResult) -> f64| mean(&runs.iter().map(f).collect::<Vec<_>>());
            SummaryRow {
                label: label.clone(),
                average_wait: mean(&waits),
                average_wait_seed_std: std_dev(&waits),
                improvement: None,
                bin_wait_std: pick(|c| c.bin_wait_std),
                travel_time: mean(&travel),
                travel_time_std: std_dev(&travel),
                left_behind: pick(|c| c.left_behind_mass),
                z1: pick(|c| c.z1),
                z2: pick(|c| c.z2),
                violation: pick(|c| c.violation),
            }
        })
        .collect();
    let reference = |want: &str| rows.iter().find(|r| r.label == want).map(|r| r.average_wait);
    let (s1, s1n) = (reference("S1"), reference("S1-N"));
    for r in rows.iter_mut() {
        let base = if r.label.ends_with("-N") { s1n } else { s1 };
        r.improvement = base.filter(|b| *b > 0.0).map(|b| (b - r.average_wait) / b);
    }
    rows
}

/// Runs every strategy for every seed. Cells are independent and run in
/// parallel; stage-1 plans are shared between strategies of the same seed.
pub fn run_experiment(specs: &[StrategySpec], sc: &Scenario, seeds: &[u64], warmup: f64) -> Result<ExperimentReport> {
    let c = &sc.config;
    if !(warmup >= 0.0 && warmup < c.period.length()) {
        return Err(Error::malformed(format!("warmup {warmup} must lie in [0, period length)")));
    }
    for s in specs {
        s.check()?;
    }
    let per_seed: Vec<Vec<CellResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let cs = CellSeeds::derive(seed);
            let shared = if specs.iter().any(|s| s.kind.optimizes_formation()) {
                let free = specs.iter().find(|s| s.kind.optimizes_formation()).expect("present");
                Some(base_plan(free, sc, cs)?)
            } else {
                None
            };
            specs
                .par_iter()
                .map(|spec| {
                    let (realized, delays) = realized_demand(spec, sc, cs)?;
                    let (plan, hist) = match (&shared, spec.kind.optimizes_formation()) {
                        (Some((p, h)), true) => (p.clone(), h.clone()),
                        _ => base_plan(spec, sc, cs)?,
                    };
                    let sp = finish_plan(spec, sc, plan, hist, &realized, cs)?;
                    measure(&spec.label(), seed, sp, sc, &realized, delays, warmup)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = specs.iter().map(StrategySpec::label).collect();
    let cells: Vec<Vec<CellResult>> = (0..specs.len()).map(|s| per_seed.iter().map(|row| row[s].clone()).collect()).collect();
    let summary = summarize(&labels, &cells);
    Ok(ExperimentReport {
        labels,
        seeds: seeds.to_vec(),
        warmup,
        period: c.period,
        cells,
        summary,
        config_json: serde_json::to_string(&sc.config)?,
    })
}
