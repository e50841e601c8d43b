//! Formation and timetable optimization.
//!
//! Chromosome layout for `K` trains on an `N`-station line (length `K * N`):
//! `K` formation ids, then `K` first-station departures, then the
//! `K * (N - 2)` intermediate dwell times, train by train.
//!
//! Fitness is the inverse of total spare capacity plus a penalty for every
//! passenger who would have to wait for a third train.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::ga::{evolve, inverse_fitness, GaParams, GaRng, GenerationStats, Problem};
use crate::model::{FormationId, LineConfig, OperationBounds, StudyPeriod, TrainPlan};
use crate::simulator::{evaluate, Evaluation};
use crate::validate::{departure_windows, validate_line, TIME_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gene {
    Formation(FormationId),
    Time(f64),
}

impl Gene {
    fn time(&self) -> Result<f64> {
        match *self {
            Gene::Time(t) => Ok(t),
            Gene::Formation(_) => Err(Error::malformed("formation gene found in a time slot")),
        }
    }
}

pub fn encode_stage1(plan: &TrainPlan) -> Vec<Gene> {
    let mut g: Vec<Gene> = plan.formations.iter().map(|&f| Gene::Formation(f)).collect();
    g.extend(plan.first_departures.iter().map(|&t| Gene::Time(t)));
    g.extend(plan.dwell_times.iter().flatten().map(|&t| Gene::Time(t)));
    g
}

pub fn decode_stage1(genes: &[Gene], cfg: &LineConfig) -> Result<TrainPlan> {
    let n = cfg.n_stations();
    if n < 2 || genes.is_empty() || genes.len() % n != 0 {
        return Err(Error::malformed(format!("chromosome length {} is not a multiple of {n}", genes.len())));
    }
    let k = genes.len() / n;
    let formations = genes[..k]
        .iter()
        .map(|g| match *g {
            Gene::Formation(f) => Ok(f),
            Gene::Time(_) => Err(Error::malformed("time gene found in a formation slot")),
        })
        .collect::<Result<Vec<_>>>()?;
    let first_departures = genes[k..2 * k].iter().map(Gene::time).collect::<Result<Vec<_>>>()?;
    let dwells = genes[2 * k..].iter().map(Gene::time).collect::<Result<Vec<_>>>()?;
    let dwell_times = if n > 2 { dwells.chunks(n - 2).map(<[f64]>::to_vec).collect() } else { vec![Vec::new(); k] };
    Ok(TrainPlan { formations, first_departures, dwell_times })
}

/// Stage-1 problem adapter.
pub struct Stage1Problem<'a> {
    cfg: &'a LineConfig,
    dm: &'a DemandModel,
    bounds: OperationBounds,
    n_trains: usize,
    windows: Vec<(f64, f64)>,
    choices: Vec<FormationId>,
    /// Objective cost of one passenger who would wait for a third train.
    pub penalty_weight: f64,
    pub departure_step: f64,
    pub dwell_step: f64,
}

impl<'a> Stage1Problem<'a> {
    pub fn new(cfg: &'a LineConfig, dm: &'a DemandModel, bounds: OperationBounds, period: StudyPeriod, n_trains: usize) -> Result<Self> {
        validate_line(cfg).into_result()?;
        let windows = departure_windows(n_trains, &bounds, &period)?;
        let choices: Vec<FormationId> = cfg.selectable_formations().iter().map(|f| f.id).collect();
        if choices.is_empty() {
            return Err(Error::infeasible("no selectable formation in the catalog"));
        }
        Ok(Stage1Problem {
            cfg,
            dm,
            bounds,
            n_trains,
            windows,
            choices,
            penalty_weight: cfg.max_capacity(),
            departure_step: (bounds.headway_max - bounds.headway_min).max(0.1),
            dwell_step: (bounds.dwell_max - bounds.dwell_min) / 2.0,
        })
    }

    pub fn with_penalty(mut self, weight: f64) -> Self {
        self.penalty_weight = weight;
        self
    }

    pub fn gene_len(&self) -> usize {
        self.n_trains * self.cfg.n_stations()
    }

    /// Penalized objective for one chromosome.
    pub fn penalized_objective(&self, genes: &[Gene]) -> Result<f64> {
        let ev = self.evaluate(genes)?;
        Ok(ev.spare + self.penalty_weight * ev.violation)
    }

    pub fn evaluate(&self, genes: &[Gene]) -> Result<Evaluation> {
        let plan = decode_stage1(genes, self.cfg)?;
        evaluate(&plan, self.cfg, self.dm, None)
    }

    fn repair_departures(&self, deps: &mut [f64]) {
        let (hmin, hmax) = (self.bounds.headway_min, self.bounds.headway_max);
        for k in 0..deps.len() {
            let (mut lo, mut hi) = self.windows[k];
            if k > 0 {
                lo = lo.max(deps[k - 1] + hmin);
                hi = hi.min(deps[k - 1] + hmax);
            }
            deps[k] = fit(deps[k], lo, hi);
        }
    }

    /// Keeps every downstream headway in range by adjusting the later train's
    /// dwell at each station.
    fn repair_dwells(&self, deps: &[f64], dwells: &mut [f64]) {
        let b = &self.bounds;
        let w = self.cfg.n_stations() - 2;
        if w == 0 {
            return;
        }
        for d in dwells.iter_mut() {
            *d = d.clamp(b.dwell_min, b.dwell_max);
        }
        for k in 1..deps.len() {
            let mut gap = deps[k] - deps[k - 1];
            for c in 0..w {
                let prev = dwells[(k - 1) * w + c];
                let lo = (prev + b.headway_min - gap).max(b.dwell_min);
                let hi = (prev + b.headway_max - gap).min(b.dwell_max);
                let d = &mut dwells[k * w + c];
                *d = fit(*d, lo, hi);
                gap += *d - prev;
            }
        }
    }

    fn check_repaired(&self, genes: &[Gene]) -> Result<()> {
        let k = self.n_trains;
        let deps: Vec<f64> = genes[k..2 * k].iter().map(Gene::time).collect::<Result<_>>()?;
        let (hmin, hmax) = (self.bounds.headway_min, self.bounds.headway_max);
        let ok_windows = deps.iter().zip(&self.windows).all(|(t, (lo, hi))| *t >= lo - TIME_TOL && *t <= hi + TIME_TOL);
        let ok_gaps = deps.windows(2).all(|p| {
            let g = p[1] - p[0];
            g >= hmin - TIME_TOL && g <= hmax + TIME_TOL
        });
        if ok_windows && ok_gaps {
            Ok(())
        } else {
            Err(Error::OverConstrained("departure repair did not converge".into()))
        }
    }
}

impl Problem for Stage1Problem<'_> {
    type Gene = Gene;

    fn random_individual(&self, rng: &mut GaRng) -> Vec<Gene> {
        let k = self.n_trains;
        let b = &self.bounds;
        let mut genes: Vec<Gene> = (0..k).map(|_| Gene::Formation(self.choices[rng.gen_range(0..self.choices.len())])).collect();
        let mut deps = Vec::with_capacity(k);
        for (idx, &(lo, hi)) in self.windows.iter().enumerate() {
            let t = if idx == 0 {
                uniform(rng, lo, hi)
            } else {
                let prev: f64 = deps[idx - 1];
                let gap = uniform(rng, b.headway_min, b.headway_max);
                fit(prev + gap, lo.max(prev + b.headway_min), hi.min(prev + b.headway_max))
            };
            deps.push(t);
        }
        genes.extend(deps.into_iter().map(Gene::Time));
        let w = self.cfg.n_stations() - 2;
        genes.extend((0..k * w).map(|_| Gene::Time(uniform(rng, b.dwell_min, b.dwell_max))));
        // Windows were checked in `new`, so only the dwell sweep has work left.
        let _ = self.repair(&mut genes);
        genes
    }

    fn fitness(&self, genes: &[Gene]) -> Result<f64> {
        Ok(inverse_fitness(self.penalized_objective(genes)?))
    }

    fn mutate_gene(&self, genes: &mut [Gene], pos: usize, rng: &mut GaRng) {
        let k = self.n_trains;
        genes[pos] = match genes[pos] {
            Gene::Formation(_) => Gene::Formation(self.choices[rng.gen_range(0..self.choices.len())]),
            Gene::Time(t) => {
                let step = if pos < 2 * k { self.departure_step } else { self.dwell_step };
                Gene::Time(t + uniform(rng, -step, step))
            }
        };
    }

    fn repair(&self, genes: &mut [Gene]) -> Result<()> {
        let k = self.n_trains;
        if genes.len() != self.gene_len() {
            return Err(Error::malformed(format!("chromosome length {} != {}", genes.len(), self.gene_len())));
        }
        for g in &genes[..k] {
            match g {
                Gene::Formation(f) if self.cfg.formation(*f).is_some() => {}
                _ => return Err(Error::malformed("invalid formation gene")),
            }
        }
        let mut times: Vec<f64> = genes[k..].iter().map(Gene::time).collect::<Result<_>>()?;
        let (deps, dwells) = times.split_at_mut(k);
        self.repair_departures(deps);
        self.repair_dwells(deps, dwells);
        for (g, t) in genes[k..].iter_mut().zip(times) {
            *g = Gene::Time(t);
        }
        self.check_repaired(genes)
    }
}

/// Clamp that resolves an empty interval to its lower end.
fn fit(x: f64, lo: f64, hi: f64) -> f64 {
    x.min(hi).max(lo)
}

fn uniform(rng: &mut GaRng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Result of the formation and timetable optimization.
#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub plan: TrainPlan,
    pub spare: f64,
    pub violation: f64,
    pub history: Vec<GenerationStats>,
}

pub fn optimize_formation_and_timetable(
    cfg: &LineConfig,
    dm: &DemandModel,
    bounds: &OperationBounds,
    period: &StudyPeriod,
    n_trains: usize,
    params: &GaParams,
) -> Result<Stage1Outcome> {
    let problem = Stage1Problem::new(cfg, dm, *bounds, *period, n_trains)?;
    let run = evolve(&problem, params)?;
    let plan = decode_stage1(&run.best.genes, cfg)?;
    let ev = problem.evaluate(&run.best.genes)?;
    Ok(Stage1Outcome { plan, spare: ev.spare, violation: ev.violation, history: run.history })
}
