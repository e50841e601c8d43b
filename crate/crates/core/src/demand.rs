//! Time-varying OD arrival rates.
//!
//! Rates are piecewise constant: commuter rates change at bin boundaries and
//! outer-transport pulses add rectangular blocks at the hub. Every integral
//! the objectives need is evaluated in closed form segment by segment.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::StudyPeriod;

/// Upper end of the outer-arrival delay range, minutes.
pub const MAX_DELAY: f64 = 30.0;

/// Default dispersion of an outer arrival's passengers onto the platform.
pub const DEFAULT_PULSE_SPREAD: f64 = 10.0;

const SPLIT_TOL: f64 = 1e-9;

/// A piecewise-constant non-negative rate on `[breaks[0], breaks[last]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseRate {
    breaks: Vec<f64>,
    rates: Vec<f64>,
}

impl PiecewiseRate {
    /// Builds the rate from `(start, end, rate)` blocks, summing overlaps and
    /// clipping to `[lo, hi]`.
    pub fn from_blocks(lo: f64, hi: f64, blocks: &[(f64, f64, f64)]) -> Self {
        let mut cuts = vec![lo, hi];
        for &(a, b, _) in blocks {
            for t in [a, b] {
                if t > lo && t < hi {
                    cuts.push(t);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut rates = vec![0.0; cuts.len() - 1];
        for &(a, b, r) in blocks {
            let (a, b) = (a.max(lo), b.min(hi));
            if b <= a || r == 0.0 {
                continue;
            }
            let first = cuts.partition_point(|&c| c < a);
            for (s, rate) in rates.iter_mut().enumerate().skip(first) {
                if cuts[s] >= b {
                    break;
                }
                *rate += r;
            }
        }
        PiecewiseRate { breaks: cuts, rates }
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.rates.iter().enumerate().map(|(s, &r)| (self.breaks[s], self.breaks[s + 1], r))
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        if t < self.breaks[0] || t >= *self.breaks.last().unwrap() {
            return 0.0;
        }
        let s = self.breaks.partition_point(|&c| c <= t) - 1;
        self.rates[s]
    }

    /// Segments overlapping `[a, b]`, clipped to it.
    fn clipped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let start = self.breaks.partition_point(|&c| c <= a).saturating_sub(1);
        self.rates[start.min(self.rates.len())..]
            .iter()
            .enumerate()
            .map(move |(o, &r)| (self.breaks[start + o], self.breaks[start + o + 1], r))
            .take_while(move |&(lo, _, _)| lo < b)
            .filter_map(move |(lo, hi, r)| {
                let (lo, hi) = (lo.max(a), hi.min(b));
                (hi > lo).then_some((lo, hi, r))
            })
    }

    /// `∫_a^b λ(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.clipped(a, b).map(|(lo, hi, r)| r * (hi - lo)).sum()
    }

    /// `∫_a^b λ(t) (d - t) dt` for `a <= b <= d`: total time passengers
    /// arriving in `[a, b]` spend waiting for a departure at `d`.
    pub fn wait_until(&self, a: f64, b: f64, d: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.clipped(a, b)
            .map(|(lo, hi, r)| r * ((d - lo) * (d - lo) - (d - hi) * (d - hi)) / 2.0)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.segments().map(|(a, b, r)| r * (b - a)).sum()
    }
}

/// Commuter OD rates given per bin, in passengers per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct CommuterTable {
    period: StudyPeriod,
    n_stations: usize,
    /// `rates[i * n + j][bin]`
    rates: Vec<Vec<f64>>,
}

impl CommuterTable {
    pub fn zeros(period: StudyPeriod, n_stations: usize) -> Self {
        CommuterTable { period, n_stations, rates: vec![vec![0.0; period.n_bins()]; n_stations * n_stations] }
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn period(&self) -> &StudyPeriod {
        &self.period
    }

    pub fn set(&mut self, origin: usize, dest: usize, bin: usize, rate: f64) -> Result<()> {
        let n = self.n_stations;
        if origin >= n || dest >= n || dest <= origin {
            return Err(Error::malformed(format!("OD pair ({}, {}) is not a forward trip", origin + 1, dest + 1)));
        }
        if bin >= self.period.n_bins() {
            return Err(Error::malformed(format!("bin {bin} outside the study period")));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::malformed(format!("negative or non-finite rate {rate}")));
        }
        self.rates[origin * n + dest][bin] = rate;
        Ok(())
    }

    pub fn rate(&self, origin: usize, dest: usize, bin: usize) -> f64 {
        self.rates[origin * self.n_stations + dest][bin]
    }

    /// Total passengers originating at `origin` over the period.
    pub fn origin_total(&self, origin: usize) -> f64 {
        let w = self.period.bin_width;
        (0..self.n_stations).map(|j| self.rates[origin * self.n_stations + j].iter().sum::<f64>() * w).sum()
    }

    fn blocks(&self, origin: usize, dest: usize, scale: f64) -> Vec<(f64, f64, f64)> {
        let w = self.period.bin_width;
        self.rates[origin * self.n_stations + dest]
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0.0)
            .map(|(b, &r)| {
                let a = self.period.bin_start(b);
                (a, a + w, r * scale)
            })
            .collect()
    }

    /// Multiplies every rate by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for r in self.rates.iter_mut().flatten() {
            *r *= factor;
        }
    }
}

/// A scheduled arrival of a feeder service at the hub.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterArrival {
    pub id: u32,
    pub scheduled_time: f64,
    pub passenger_count: f64,
    /// Zero-based destination station to fraction of passengers.
    pub destination_split: BTreeMap<usize, f64>,
}

impl OuterArrival {
    pub fn check(&self, hub: usize, n_stations: usize) -> Result<()> {
        if !(self.passenger_count >= 0.0 && self.passenger_count.is_finite()) {
            return Err(Error::malformed(format!("arrival {} has passenger count {}", self.id, self.passenger_count)));
        }
        let mut sum = 0.0;
        for (&j, &f) in &self.destination_split {
            if j <= hub || j >= n_stations {
                return Err(Error::malformed(format!(
                    "arrival {} sends passengers to station {}, which is not downstream of the hub",
                    self.id,
                    j + 1
                )));
            }
            if !(f >= 0.0) {
                return Err(Error::malformed(format!("arrival {} has negative fraction", self.id)));
            }
            sum += f;
        }
        if (sum - 1.0).abs() > SPLIT_TOL {
            return Err(Error::malformed(format!("arrival {} destination fractions sum to {sum}", self.id)));
        }
        Ok(())
    }

    /// Pulse window before clipping to the study period.
    pub fn window(&self, spread: f64) -> (f64, f64) {
        (self.scheduled_time, self.scheduled_time + spread)
    }

    /// Passengers from this pulse that arrive inside the period.
    pub fn mass_in(&self, period: &StudyPeriod, spread: f64) -> f64 {
        let (a, b) = self.window(spread);
        let overlap = (b.min(period.end) - a.max(period.start)).max(0.0);
        self.passenger_count * overlap / spread
    }
}

/// Delays applied to a subset of outer arrivals, keyed by arrival id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub shifts: BTreeMap<u32, f64>,
}

impl DelayScenario {
    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }
}

/// OD arrival-rate field over the study period.
#[derive(Debug, Clone)]
pub struct DemandModel {
    period: StudyPeriod,
    n_stations: usize,
    /// `rates[i * n + j]`, `None` for pairs with no demand.
    rates: Vec<Option<PiecewiseRate>>,
}

impl DemandModel {
    pub fn empty(period: StudyPeriod, n_stations: usize) -> Self {
        DemandModel { period, n_stations, rates: vec![None; n_stations * n_stations] }
    }

    /// Demand from explicit blocks per OD pair, `(origin, dest, start, end, rate)`.
    pub fn from_blocks(period: StudyPeriod, n_stations: usize, blocks: &[(usize, usize, f64, f64, f64)]) -> Result<Self> {
        let mut by_pair: BTreeMap<(usize, usize), Vec<(f64, f64, f64)>> = BTreeMap::new();
        for &(i, j, a, b, r) in blocks {
            if i >= n_stations || j >= n_stations || j <= i {
                return Err(Error::malformed(format!("OD pair ({}, {}) is not a forward trip", i + 1, j + 1)));
            }
            if !(r >= 0.0 && r.is_finite()) || !(b >= a) {
                return Err(Error::malformed("rate blocks need rate >= 0 and end >= start"));
            }
            by_pair.entry((i, j)).or_default().push((a, b, r));
        }
        let mut dm = DemandModel::empty(period, n_stations);
        for ((i, j), bl) in by_pair {
            dm.rates[i * n_stations + j] = Some(PiecewiseRate::from_blocks(period.start, period.end, &bl));
        }
        Ok(dm)
    }

    pub fn period(&self) -> &StudyPeriod {
        &self.period
    }

    pub fn n_stations(&self) -> usize {
        self.n_stations
    }

    pub fn rate(&self, i: usize, j: usize) -> Option<&PiecewiseRate> {
        if j <= i || j >= self.n_stations {
            return None;
        }
        self.rates[i * self.n_stations + j].as_ref()
    }

    /// Passengers from `i` to `j` arriving in `[t0, t1]`, clamped to the
    /// period. Zero for `j <= i`.
    pub fn interval_demand(&self, i: usize, j: usize, t0: f64, t1: f64) -> f64 {
        match self.rate(i, j) {
            Some(r) => r.integral(self.period.clamp(t0), self.period.clamp(t1)),
            None => 0.0,
        }
    }

    /// Passenger-minutes spent by `i -> j` passengers arriving in `[t0, d]`
    /// waiting for a departure at `d`.
    pub fn first_wait_integral(&self, i: usize, j: usize, t0: f64, d: f64) -> f64 {
        self.wait_between(i, j, t0, d, d)
    }

    /// Like [`first_wait_integral`](Self::first_wait_integral) but restricted
    /// to arrivals in `[a, b]`, `b <= d`.
    pub fn wait_between(&self, i: usize, j: usize, a: f64, b: f64, d: f64) -> f64 {
        match self.rate(i, j) {
            Some(r) => r.wait_until(self.period.clamp(a), self.period.clamp(b), d),
            None => 0.0,
        }
    }

    /// Total demand of an origin station over `[t0, t1]`, all destinations.
    pub fn origin_demand(&self, i: usize, t0: f64, t1: f64) -> f64 {
        (i + 1..self.n_stations).map(|j| self.interval_demand(i, j, t0, t1)).sum()
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().flatten().map(PiecewiseRate::total).sum()
    }
}

fn pulse_blocks(outer: &[OuterArrival], hub: usize, spread: f64) -> Vec<(usize, usize, f64, f64, f64)> {
    let mut blocks = Vec::new();
    for a in outer {
        let (s, e) = a.window(spread);
        let height = a.passenger_count / spread;
        for (&j, &f) in &a.destination_split {
            if f > 0.0 && height > 0.0 {
                blocks.push((hub, j, s, e, height * f));
            }
        }
    }
    blocks
}

/// Factor applied to hub-origin commuter rates so that outer passengers make
/// up `hub_share` of hub-origin demand over the period.
pub fn commuter_scale(base: &CommuterTable, outer: &[OuterArrival], hub: usize, hub_share: f64, spread: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&hub_share) {
        return Err(Error::malformed(format!("hub share {hub_share} outside [0, 1]")));
    }
    if !(spread > 0.0) {
        return Err(Error::malformed("pulse spread must be positive"));
    }
    let outer_mass: f64 = outer.iter().map(|a| a.mass_in(base.period(), spread)).sum();
    let base_mass = base.origin_total(hub);
    if outer_mass == 0.0 {
        if hub_share > 0.0 {
            return Err(Error::malformed("positive hub share requires outer arrivals inside the period"));
        }
        return Ok(1.0);
    }
    if hub_share == 0.0 {
        return Err(Error::malformed("hub share 0 is incompatible with outer arrivals"));
    }
    if hub_share == 1.0 {
        return Ok(0.0);
    }
    if base_mass == 0.0 {
        return Err(Error::malformed("hub share below 1 needs hub-origin commuter demand"));
    }
    Ok(outer_mass * (1.0 - hub_share) / (hub_share * base_mass))
}

/// Combines the commuter table (hub-origin rows multiplied by `hub_scale`)
/// with rectangular outer-arrival pulses at the hub. Pulses are truncated at
/// the period boundaries.
pub fn assemble_demand(base: &CommuterTable, outer: &[OuterArrival], hub: usize, hub_scale: f64, spread: f64) -> Result<DemandModel> {
    let n = base.n_stations();
    if hub >= n {
        return Err(Error::malformed("hub outside the line"));
    }
    if !(spread > 0.0) {
        return Err(Error::malformed("pulse spread must be positive"));
    }
    for a in outer {
        a.check(hub, n)?;
    }
    let mut blocks = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let scale = if i == hub { hub_scale } else { 1.0 };
            blocks.extend(base.blocks(i, j, scale).into_iter().map(|(a, b, r)| (i, j, a, b, r)));
        }
    }
    blocks.extend(pulse_blocks(outer, hub, spread));
    DemandModel::from_blocks(*base.period(), n, &blocks)
}

/// Builds the demand field, calibrating the hub commuter rows to `hub_share`.
pub fn build_demand_model(base: &CommuterTable, outer: &[OuterArrival], hub: usize, hub_share: f64, spread: f64) -> Result<DemandModel> {
    for a in outer {
        a.check(hub, base.n_stations())?;
    }
    let scale = commuter_scale(base, outer, hub, hub_share, spread)?;
    assemble_demand(base, outer, hub, scale, spread)
}

/// Picks `n_delayed` distinct arrivals and delays each by a uniform draw from
/// `(0, MAX_DELAY]` minutes.
pub fn sample_delay_scenario(outer: &[OuterArrival], n_delayed: usize, seed: u64) -> Result<DelayScenario> {
    if n_delayed > outer.len() {
        return Err(Error::malformed(format!("cannot delay {n_delayed} of {} arrivals", outer.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, outer.len(), n_delayed).into_vec();
    picks.sort_unstable();
    let shifts = picks
        .into_iter()
        .map(|p| {
            // gen::<f64>() is in [0, 1), so this lands in (0, MAX_DELAY].
            let delay = MAX_DELAY * (1.0 - rng.gen::<f64>());
            (outer[p].id, delay)
        })
        .collect();
    Ok(DelayScenario { seed: Some(seed), shifts })
}

/// Shifts delayed arrivals later. Truncation at the period end happens when
/// the pulses are assembled.
pub fn apply_delay_scenario(outer: &[OuterArrival], scenario: &DelayScenario) -> Result<Vec<OuterArrival>> {
    for id in scenario.shifts.keys() {
        if !outer.iter().any(|a| a.id == *id) {
            return Err(Error::malformed(format!("delay scenario names unknown arrival {id}")));
        }
    }
    Ok(outer
        .iter()
        .map(|a| {
            let mut a = a.clone();
            if let Some(d) = scenario.shifts.get(&a.id) {
                a.scheduled_time += d;
            }
            a
        })
        .collect())
}
