//! Holding control on top of a fixed train plan.
//!
//! The chromosome holds one real value per (train, intermediate station),
//! train by train. Fitness is the inverse of total waiting time under a given
//! (usually delay-perturbed) demand realization.

use rand::Rng;

use crate::demand::DemandModel;
use crate::error::{Error, Result};
use crate::ga::{evolve, inverse_fitness, GaParams, GaRng, GenerationStats, Problem};
use crate::model::{HoldingPlan, LineConfig, OperationBounds, Timetable, TrainPlan};
use crate::simulator::{evaluate, propagate_timetable, Evaluation};
use crate::validate::TIME_TOL;

/// `K * (N - 2)` values drawn uniformly from `[-h_max, h_max]`.
pub fn random_holding_individual(n_trains: usize, n_stations: usize, h_max: f64, rng: &mut GaRng) -> Vec<f64> {
    let len = n_trains * n_stations.saturating_sub(2);
    if h_max <= 0.0 {
        return vec![0.0; len];
    }
    (0..len).map(|_| rng.gen_range(-h_max..=h_max)).collect()
}

pub fn holding_from_genes(genes: &[f64], n_trains: usize, n_stations: usize) -> Result<HoldingPlan> {
    let w = n_stations.saturating_sub(2);
    if genes.len() != n_trains * w {
        return Err(Error::malformed(format!("holding chromosome length {} != {}", genes.len(), n_trains * w)));
    }
    let holds = if w == 0 { vec![Vec::new(); n_trains] } else { genes.chunks(w).map(<[f64]>::to_vec).collect() };
    Ok(HoldingPlan { holds })
}

pub fn genes_from_holding(plan: &HoldingPlan) -> Vec<f64> {
    plan.holds.iter().flatten().copied().collect()
}

/// Stage-2 problem adapter.
pub struct Stage2Problem<'a> {
    plan: &'a TrainPlan,
    cfg: &'a LineConfig,
    dm: &'a DemandModel,
    bounds: OperationBounds,
    base: Timetable,
    /// Waiting-time cost of one passenger who would wait for a third train.
    pub penalty_weight: f64,
}

impl<'a> Stage2Problem<'a> {
    pub fn new(plan: &'a TrainPlan, cfg: &'a LineConfig, dm: &'a DemandModel, bounds: OperationBounds) -> Result<Self> {
        bounds.check()?;
        let base = propagate_timetable(plan, cfg, None)?;
        Ok(Stage2Problem { plan, cfg, dm, bounds, base, penalty_weight: dm.period().length() })
    }

    pub fn with_penalty(mut self, weight: f64) -> Self {
        self.penalty_weight = weight;
        self
    }

    fn width(&self) -> usize {
        self.cfg.n_stations() - 2
    }

    pub fn evaluate(&self, genes: &[f64]) -> Result<Evaluation> {
        let h = holding_from_genes(genes, self.plan.n_trains(), self.cfg.n_stations())?;
        evaluate(self.plan, self.cfg, self.dm, Some(&h))
    }

    pub fn penalized_objective(&self, genes: &[f64]) -> Result<f64> {
        let ev = self.evaluate(genes)?;
        let lost = self.early_loss(&ev.flow.timetable);
        Ok(ev.waiting.total() + self.penalty_weight * (ev.violation + lost))
    }

    /// Passengers who would have caught the scheduled last train but arrive
    /// after the held one has left. They are charged like third-train
    /// violations.
    pub fn early_loss(&self, held: &Timetable) -> f64 {
        let last = self.plan.n_trains() - 1;
        let n = self.cfg.n_stations();
        (1..n - 1)
            .map(|i| {
                let (a, b) = (held.at(last, i), self.base.at(last, i));
                if a < b {
                    (i + 1..n).map(|j| self.dm.interval_demand(i, j, a, b)).sum()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Allowed headway range at a cell: the operating bounds, widened to
    /// include the unheld headway so that zero holding is always admissible.
    fn headway_window(&self, k: usize, i: usize) -> (f64, f64) {
        let base = self.base.at(k, i) - self.base.at(k - 1, i);
        (self.bounds.headway_min.min(base), self.bounds.headway_max.max(base))
    }

    /// One forward pass that moves each offending hold to the nearest value
    /// keeping the train within its drift limit and the headway in its
    /// window. Returns whether every headway ended up admissible.
    fn clip_pass(&self, genes: &mut [f64]) -> bool {
        let w = self.width();
        let hm = self.bounds.hold_max;
        let dm = self.bounds.drift_limit();
        let mut ok = true;
        let mut prev_shift = vec![0.0; w];
        for k in 0..self.plan.n_trains() {
            let mut shift = 0.0;
            for c in 0..w {
                let i = c + 1;
                let g = &mut genes[k * w + c];
                let (mut a, mut b) = ((-hm).max(-dm - shift), hm.min(dm - shift));
                if k > 0 {
                    let (lo, hi) = self.headway_window(k, i);
                    let unheld = self.base.at(k, i) + shift - (self.base.at(k - 1, i) + prev_shift[c]);
                    let (ha, hb) = (a.max(lo - unheld), b.min(hi - unheld));
                    if ha <= hb + TIME_TOL {
                        (a, b) = (ha.min(hb), hb.max(ha));
                    } else {
                        ok = false;
                        let target = if unheld < lo { b } else { a };
                        (a, b) = (target, target);
                    }
                }
                *g = g.clamp(a, b.max(a));
                shift += *g;
                prev_shift[c] = shift;
            }
        }
        ok
    }
}

impl Problem for Stage2Problem<'_> {
    type Gene = f64;

    fn random_individual(&self, rng: &mut GaRng) -> Vec<f64> {
        random_holding_individual(self.plan.n_trains(), self.cfg.n_stations(), self.bounds.hold_max, rng)
    }

    fn fitness(&self, genes: &[f64]) -> Result<f64> {
        Ok(inverse_fitness(self.penalized_objective(genes)?))
    }

    fn mutate_gene(&self, genes: &mut [f64], pos: usize, rng: &mut GaRng) {
        let hm = self.bounds.hold_max;
        if hm > 0.0 {
            genes[pos] = rng.gen_range(-hm..=hm);
        }
    }

    /// Clips holds so every composite headway stays in range. When the
    /// neighbouring trains leave no room, the whole chromosome is shrunk
    /// toward zero until a clip pass succeeds.
    fn repair(&self, genes: &mut [f64]) -> Result<()> {
        let len = self.plan.n_trains() * self.width();
        if genes.len() != len {
            return Err(Error::malformed(format!("holding chromosome length {} != {len}", genes.len())));
        }
        let original = genes.to_vec();
        let mut scale = 1.0;
        for _ in 0..12 {
            for (g, o) in genes.iter_mut().zip(&original) {
                *g = o * scale;
            }
            if self.clip_pass(genes) {
                return Ok(());
            }
            scale *= 0.5;
        }
        genes.iter_mut().for_each(|g| *g = 0.0);
        Ok(())
    }

    fn seed_individuals(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.plan.n_trains() * self.width()]]
    }
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub holding: HoldingPlan,
    pub waiting: f64,
    pub violation: f64,
    pub zero_holding_waiting: f64,
    pub history: Vec<GenerationStats>,
}

pub fn optimize_holding(
    plan: &TrainPlan,
    cfg: &LineConfig,
    delayed: &DemandModel,
    bounds: &OperationBounds,
    params: &GaParams,
) -> Result<Stage2Outcome> {
    let problem = Stage2Problem::new(plan, cfg, delayed, *bounds)?;
    let zero = problem.seed_individuals().remove(0);
    let zero_waiting = problem.evaluate(&zero)?.waiting.total();
    let run = evolve(&problem, params)?;
    let ev = problem.evaluate(&run.best.genes)?;
    Ok(Stage2Outcome {
        holding: holding_from_genes(&run.best.genes, plan.n_trains(), cfg.n_stations())?,
        waiting: ev.waiting.total(),
        violation: ev.violation,
        zero_holding_waiting: zero_waiting,
        history: run.history,
    })
}
