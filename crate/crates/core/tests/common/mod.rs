#![allow(dead_code)]

use hubrail::demand::DemandModel;
use hubrail::model::{FormationId, FormationType, LineConfig, OperationBounds, StudyPeriod, TrainPlan};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Line with the given run times and formations `(id, capacity)`.
pub fn line(run_times: Vec<f64>, formations: &[(u32, f64)]) -> LineConfig {
    let n = run_times.len() + 1;
    LineConfig {
        station_names: (0..n).map(|i| format!("S{}", i + 1)).collect(),
        run_times,
        hub_index: (n / 2).max(1),
        formation_catalog: formations
            .iter()
            .map(|&(id, capacity)| FormationType { id: FormationId(id), car_count: id, capacity, selectable: true })
            .collect(),
    }
}

pub fn bounds(hmin: f64, hmax: f64) -> OperationBounds {
    OperationBounds { headway_min: hmin, headway_max: hmax, dwell_min: 0.5, dwell_max: 0.75, hold_max: 1.0, drift_max: None }
}

/// A small random line, plan and demand.
pub struct Instance {
    pub cfg: LineConfig,
    pub plan: TrainPlan,
    pub dm: DemandModel,
    pub period: StudyPeriod,
}

/// Up to `max_n` stations and `max_k` trains. When `single_destination` is
/// set, every origin sends all its passengers to one destination, which makes
/// first-come-first-served boarding aggregate exactly like proportional
/// boarding. Every demand block carries an integer number of passengers.
pub fn small_instance(r: &mut ChaCha8Rng, max_n: usize, max_k: usize, single_destination: bool) -> Instance {
    let n = r.gen_range(2..=max_n);
    let kk = r.gen_range(1..=max_k);
    let run_times: Vec<f64> = (0..n - 1).map(|_| r.gen_range(1..=6) as f64 * 0.5).collect();
    let formations = [(1, r.gen_range(5..=40) as f64), (2, r.gen_range(20..=80) as f64)];
    let cfg = line(run_times, &formations);
    let period = StudyPeriod::new(0.0, 60.0, 5.0).unwrap();
    let mut t = r.gen_range(0..=8) as f64 * 0.5;
    let mut first = Vec::with_capacity(kk);
    for _ in 0..kk {
        first.push(t);
        t += r.gen_range(2..=12) as f64 * 0.5;
    }
    let plan = TrainPlan {
        formations: (0..kk).map(|_| FormationId(r.gen_range(1..=2))).collect(),
        first_departures: first,
        dwell_times: (0..kk).map(|_| (0..n.saturating_sub(2)).map(|_| r.gen_range(0.5..=0.75)).collect()).collect(),
    };
    let mut blocks = Vec::new();
    for i in 0..n - 1 {
        let dests: Vec<usize> = if single_destination { vec![r.gen_range(i + 1..n)] } else { (i + 1..n).collect() };
        for &j in &dests {
            for _ in 0..r.gen_range(0..=3) {
                let a = r.gen_range(0..40) as f64;
                let b = a + r.gen_range(1..=15) as f64;
                let mass = r.gen_range(1..=60) as f64;
                blocks.push((i, j, a, b, mass / (b - a)));
            }
        }
    }
    let dm = DemandModel::from_blocks(period, n, &blocks).unwrap();
    Instance { cfg, plan, dm, period }
}

/// A random instance at the scale of the bundled line: 13 stations, 18
/// trains, capacities that bind at busy stations.
pub fn full_scale_instance(r: &mut ChaCha8Rng) -> Instance {
    let n = 13;
    let kk = 18;
    let run_times: Vec<f64> = (0..n - 1).map(|_| r.gen_range(1.0..3.0)).collect();
    let cfg = line(run_times, &[(4, 960.0), (6, 1440.0), (8, 1920.0)]);
    let period = StudyPeriod::new(450.0, 550.0, 5.0).unwrap();
    let mut t = 450.0 + r.gen_range(0.0..5.0);
    let mut first = Vec::with_capacity(kk);
    for _ in 0..kk {
        first.push(t);
        t += r.gen_range(3.5..6.5);
    }
    let ids = [4, 6, 8];
    let plan = TrainPlan {
        formations: (0..kk).map(|_| FormationId(ids[r.gen_range(0..3)])).collect(),
        first_departures: first,
        dwell_times: (0..kk).map(|_| (0..n - 2).map(|_| r.gen_range(0.5..=0.75)).collect()).collect(),
    };
    let busy = r.gen_range(0..n - 1);
    let mut blocks = Vec::new();
    for i in 0..n - 1 {
        for j in i + 1..n {
            let base = if i == busy { r.gen_range(5.0..60.0) } else { r.gen_range(0.0..3.0) };
            for b in 0..20 {
                let a = 450.0 + 5.0 * b as f64;
                blocks.push((i, j, a, a + 5.0, base * r.gen_range(0.5..1.5)));
            }
        }
    }
    let dm = DemandModel::from_blocks(period, n, &blocks).unwrap();
    Instance { cfg, plan, dm, period }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
