//! Scenario configuration: the JSON document, demand sources (CSV tables or
//! the synthetic generator) and the materialized [`Scenario`].

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{apply_delay_scenario, assemble_demand, commuter_scale, sample_delay_scenario, CommuterTable, DelayScenario, DemandModel, OuterArrival, DEFAULT_PULSE_SPREAD};
use crate::error::{Error, Result};
use crate::ga::GaParams;
use crate::model::{clock, FormationId, LineConfig, OperationBounds, StudyPeriod};
use crate::validate::validate_line;

pub const BEIJING9_JSON: &str = include_str!("../../../configs/beijing9.json");

/// Parameters of the synthetic hub demand profile: one value per bin that
/// falls linearly over the period, with independent multiplicative noise,
/// rescaled so the busiest bin carries `peak_load * reference_capacity`
/// passengers at the hub.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDemand {
    pub seed: u64,
    pub peak_load: f64,
    pub reference_capacity: f64,
    /// Level of the last bin relative to the first, before noise.
    pub trend_end: f64,
    /// Half-width of the uniform multiplicative noise.
    pub noise: f64,
    /// Commuter rate (passengers/minute) at each station before the hub.
    pub upstream_rate: f64,
    /// Commuter rate at each station after the hub.
    pub downstream_rate: f64,
    /// Random shift of each feeder arrival around its bin centre, as a
    /// fraction of the bin width.
    pub jitter: f64,
}

impl Default for SyntheticDemand {
    fn default() -> Self {
        SyntheticDemand {
            seed: 2019,
            peak_load: 1.2,
            reference_capacity: 1440.0,
            trend_end: 0.8,
            noise: 0.15,
            upstream_rate: 6.0,
            downstream_rate: 3.0,
            jitter: 0.5,
        }
    }
}

impl SyntheticDemand {
    /// Per-bin hub passenger totals.
    pub fn hub_profile(&self, n_bins: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let raw: Vec<f64> = (0..n_bins)
            .map(|b| {
                let x = if n_bins > 1 { b as f64 / (n_bins - 1) as f64 } else { 0.0 };
                let level = 1.0 - (1.0 - self.trend_end) * x;
                level * (1.0 + self.noise * rng.gen_range(-1.0..=1.0))
            })
            .collect();
        let peak = raw.iter().copied().fold(0.0, f64::max);
        let target = self.peak_load * self.reference_capacity;
        raw.iter().map(|v| if peak > 0.0 { v / peak * target } else { 0.0 }).collect()
    }

    /// Builds the commuter table and the feeder schedule. Feeder passengers
    /// spread evenly over the stations past the hub.
    pub fn generate(&self, line: &LineConfig, period: &StudyPeriod, hub_share: f64, spread: f64) -> Result<(CommuterTable, Vec<OuterArrival>)> {
        let n = line.n_stations();
        let hub = line.hub();
        if hub + 1 >= n {
            return Err(Error::malformed("synthetic demand needs stations beyond the hub"));
        }
        let bins = period.n_bins();
        let w = period.bin_width;
        let hub_total = self.hub_profile(bins);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0f_0u64);
        let mut table = CommuterTable::zeros(*period, n);
        let downstream: Vec<usize> = (hub + 1..n).collect();
        let split: BTreeMap<usize, f64> = downstream.iter().map(|&j| (j, 1.0 / downstream.len() as f64)).collect();
        let mut outer = Vec::with_capacity(bins);
        for (b, &total) in hub_total.iter().enumerate() {
            let x = if bins > 1 { b as f64 / (bins - 1) as f64 } else { 0.0 };
            let level = 1.0 - (1.0 - self.trend_end) * x;
            for i in 0..n - 1 {
                let rate = if i == hub {
                    (1.0 - hub_share) * total / w
                } else if i < hub {
                    self.upstream_rate * level
                } else {
                    self.downstream_rate * level
                };
                let per = rate / (n - 1 - i) as f64;
                for j in i + 1..n {
                    table.set(i, j, b, per)?;
                }
            }
            let centre = period.bin_start(b) + w / 2.0 + self.jitter * w * rng.gen_range(-0.5..=0.5);
            outer.push(OuterArrival {
                id: b as u32 + 1,
                scheduled_time: (centre - spread / 2.0).max(period.start),
                passenger_count: hub_share * total,
                destination_split: split.clone(),
            });
        }
        Ok((table, outer))
    }
}

/// Where the demand comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub hub_share: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticDemand>,
    /// Commuter OD table; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commuter_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_csv: Option<PathBuf>,
}

fn default_spread() -> f64 {
    DEFAULT_PULSE_SPREAD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    #[serde(default = "default_delay_count")]
    pub count: usize,
}

fn default_delay_count() -> usize {
    4
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec { count: default_delay_count() }
    }
}

/// The fixed-formation, two-headway operation used as the comparison base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub formation: FormationId,
    pub peak_headway: f64,
    pub offpeak_headway: f64,
    /// Number of leading first-station gaps at the peak headway; the rest
    /// use the off-peak headway.
    pub peak_gaps: usize,
    #[serde(default = "default_dwell")]
    pub dwell: f64,
}

fn default_dwell() -> f64 {
    0.583
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub line: LineConfig,
    pub bounds: OperationBounds,
    pub period: StudyPeriod,
    pub n_trains: usize,
    pub demand: DemandSpec,
    #[serde(default)]
    pub delays: DelaySpec,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_ga: Option<GaParams>,
    pub baseline: BaselineSpec,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::malformed(format!("config: {e}")))
    }

    pub fn beijing9() -> Self {
        Self::from_json(BEIJING9_JSON).expect("bundled config parses")
    }

    /// Reads a config and resolves relative CSV paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.demand.commuter_csv, &mut cfg.demand.outer_csv].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn stage2_params(&self) -> GaParams {
        self.stage2_ga.unwrap_or(self.ga)
    }

    pub fn check(&self) -> Result<()> {
        validate_line(&self.line).into_result()?;
        self.bounds.check()?;
        self.ga.check()?;
        if let Some(p) = &self.stage2_ga {
            p.check()?;
        }
        if self.n_trains < 2 {
            return Err(Error::malformed("at least two trains are required"));
        }
        if self.line.capacity(self.baseline.formation).is_none() {
            return Err(Error::malformed(format!("baseline formation {} not in catalog", self.baseline.formation)));
        }
        if self.baseline.peak_gaps >= self.n_trains {
            return Err(Error::malformed("baseline peak gap count exceeds the number of gaps"));
        }
        Ok(())
    }

    /// Loads or generates the demand inputs and calibrates the hub share.
    pub fn materialize(&self) -> Result<Scenario> {
        self.check()?;
        let d = &self.demand;
        let (commuter, outer) = match (&d.synthetic, &d.commuter_csv, &d.outer_csv) {
            (Some(s), None, None) => s.generate(&self.line, &self.period, d.hub_share, d.spread)?,
            (None, Some(c), Some(o)) => {
                let table = read_commuter_csv(std::fs::File::open(c)?, &self.period, self.line.n_stations())?;
                let outer = read_outer_csv(std::fs::File::open(o)?)?;
                (table, outer)
            }
            _ => return Err(Error::malformed("demand needs either `synthetic` or both `commuter_csv` and `outer_csv`")),
        };
        let hub = self.line.hub();
        for a in &outer {
            a.check(hub, self.line.n_stations())?;
        }
        let hub_scale = commuter_scale(&commuter, &outer, hub, d.hub_share, d.spread)?;
        let scheduled = assemble_demand(&commuter, &outer, hub, hub_scale, d.spread)?;
        Ok(Scenario { config: self.clone(), commuter, outer, hub_scale, scheduled })
    }
}

/// A config with its demand inputs loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub commuter: CommuterTable,
    pub outer: Vec<OuterArrival>,
    pub hub_scale: f64,
    /// Demand with every feeder on time.
    pub scheduled: DemandModel,
}

impl Scenario {
    pub fn sample_delays(&self, seed: u64) -> Result<DelayScenario> {
        sample_delay_scenario(&self.outer, self.config.delays.count.min(self.outer.len()), seed)
    }

    /// Demand under a delay realization, keeping the scheduled calibration.
    pub fn realize(&self, delays: &DelayScenario) -> Result<DemandModel> {
        let shifted = apply_delay_scenario(&self.outer, delays)?;
        assemble_demand(&self.commuter, &shifted, self.config.line.hub(), self.hub_scale, self.config.demand.spread)
    }
}

fn parse_time(s: &str) -> Result<f64> {
    let s = s.trim();
    s.parse::<f64>().ok().or_else(|| clock::parse(s)).ok_or_else(|| Error::malformed(format!("bad time `{s}`")))
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::malformed(format!("bad {what} `{s}`")))
}

fn parse_station(s: &str, n: usize) -> Result<usize> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 && v <= n => Ok(v - 1),
        _ => Err(Error::malformed(format!("station `{s}` outside 1..={n}"))),
    }
}

/// Columns `origin,destination,bin_start,rate`; stations one-based, rates in
/// passengers per minute, `bin_start` in minutes or `HH:MM`.
pub fn read_commuter_csv<R: Read>(input: R, period: &StudyPeriod, n_stations: usize) -> Result<CommuterTable> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let mut table = CommuterTable::zeros(*period, n_stations);
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::malformed(format!("commuter row has {} fields, expected 4", rec.len())));
        }
        let i = parse_station(&rec[0], n_stations)?;
        let j = parse_station(&rec[1], n_stations)?;
        let start = parse_time(&rec[2])?;
        let bin = period.bin_of(start).filter(|&b| (period.bin_start(b) - start).abs() < 1e-6);
        let bin = bin.ok_or_else(|| Error::malformed(format!("`{}` is not a bin start", &rec[2])))?;
        table.set(i, j, bin, parse_num(&rec[3], "rate")?)?;
    }
    Ok(table)
}

pub fn write_commuter_csv<W: Write>(table: &CommuterTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["origin", "destination", "bin_start", "rate"])?;
    let n = table.n_stations();
    let p = *table.period();
    for i in 0..n {
        for j in i + 1..n {
            for b in 0..p.n_bins() {
                let r = table.rate(i, j, b);
                if r > 0.0 {
                    w.write_record([(i + 1).to_string(), (j + 1).to_string(), clock::format(p.bin_start(b)), format!("{r}")])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `id,time,count,dest_<j>...` where each `dest_<j>` column holds the
/// fraction bound for one-based station `j`.
pub fn read_outer_csv<R: Read>(input: R) -> Result<Vec<OuterArrival>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "id" || &headers[1] != "time" || &headers[2] != "count" {
        return Err(Error::malformed("outer schedule needs columns id,time,count,dest_<j>..."));
    }
    let dests = headers
        .iter()
        .skip(3)
        .map(|h| {
            h.strip_prefix("dest_")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&j| j >= 1)
                .map(|j| j - 1)
                .ok_or_else(|| Error::malformed(format!("bad destination column `{h}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let id = rec[0].trim().parse::<u32>().map_err(|_| Error::malformed(format!("bad arrival id `{}`", &rec[0])))?;
        let mut split = BTreeMap::new();
        for (c, &j) in dests.iter().enumerate() {
            let f = parse_num(&rec[c + 3], "fraction")?;
            if f != 0.0 {
                split.insert(j, f);
            }
        }
        out.push(OuterArrival { id, scheduled_time: parse_time(&rec[1])?, passenger_count: parse_num(&rec[2], "count")?, destination_split: split });
    }
    Ok(out)
}

pub fn write_outer_csv<W: Write>(outer: &[OuterArrival], out: W) -> Result<()> {
    let dests: std::collections::BTreeSet<usize> = outer.iter().flat_map(|a| a.destination_split.keys().copied()).collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "time".into(), "count".into()];
    header.extend(dests.iter().map(|j| format!("dest_{}", j + 1)));
    w.write_record(&header)?;
    for a in outer {
        let mut row = vec![a.id.to_string(), clock::format(a.scheduled_time), format!("{}", a.passenger_count)];
        row.extend(dests.iter().map(|j| format!("{}", a.destination_split.get(j).copied().unwrap_or(0.0))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
