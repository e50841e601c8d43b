//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use hubrail::config::{Scenario, ScenarioConfig};
use hubrail::demand::DemandModel;
use hubrail::ga::{evolve, GaParams, GenerationStats};
use hubrail::harness::{base_plan, finish_plan, measure, realized_demand, run_experiment, CellSeeds, ExperimentReport, StrategyKind, StrategySpec};
use hubrail::model::{FormationId, StudyPeriod, TrainPlan};
use hubrail::oracle::{discretize, micro_simulate, Boarding};
use hubrail::simulator::{propagate_timetable, simulate_loading, two_train_violation, waiting_time_objective, FlowResult};
use hubrail::stage1::{optimize_formation_and_timetable, Stage1Problem};
use hubrail::stage2::{genes_from_holding, Stage2Problem};
use rand::Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs_diff<'a>(a: impl Iterator<Item = &'a f64>, b: impl Iterator<Item = &'a f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let inst = small_instance(&mut rng(1000 + seed), 5, 6, true);
        let tt = propagate_timetable(&inst.plan, &inst.cfg, None).unwrap();
        let fr = simulate_loading(&tt, &inst.plan.formations, &inst.cfg, &inst.dm).unwrap();
        let w = waiting_time_objective(&fr, &inst.dm);
        let m = micro_simulate(&tt, &inst.plan.formations, &inst.cfg, &discretize(&inst.dm, &tt, &[]), Boarding::Fcfs).unwrap();
        worst = worst
            .max(max_abs_diff(fr.boarded.iter(), m.boarded.iter()))
            .max(max_abs_diff(fr.left_behind.iter(), m.left_behind.iter()))
            .max(max_abs_diff(fr.onboard.iter(), m.onboard.iter()))
            .max((w.first - m.first_wait).abs())
            .max((w.extra - m.extra_wait).abs());
    }
    let el = start.elapsed();
    outcome(worst <= 1e-6 && el < Duration::from_secs(10), format!("50 instances, max deviation {worst:.2e}, {:.2}s", el.as_secs_f64()))
}

fn invariant_violation(fr: &FlowResult) -> Option<String> {
    const TOL: f64 = 1e-9;
    let (kk, n) = (fr.n_trains(), fr.n_stations());
    for k in 0..kk {
        let cap = fr.capacities[k];
        let (mut up, mut down) = (0.0, 0.0);
        for i in 0..n {
            up += fr.boarded[(k, i)];
            down += fr.alighting[(k, i)];
            let on = fr.onboard[(k, i)];
            let scale = 1.0 + up;
            if (on - (up - down)).abs() > TOL * scale {
                return Some(format!("conservation at ({k}, {i})"));
            }
            if on < -TOL || on > cap + TOL || (fr.spare[(k, i)] - (cap - on)).abs() > TOL * cap {
                return Some(format!("capacity at ({k}, {i})"));
            }
            if (fr.boarded[(k, i)] + fr.left_behind[(k, i)] - fr.demand[(k, i)]).abs() > TOL * (1.0 + fr.demand[(k, i)]) {
                return Some(format!("demand accounting at ({k}, {i})"));
            }
            let od: f64 = fr.od_boarded.cell(k, i).iter().sum();
            if (od - fr.boarded[(k, i)]).abs() > TOL * (1.0 + od) {
                return Some(format!("destination split at ({k}, {i})"));
            }
        }
        if fr.onboard[(k, n - 1)].abs() > TOL * (1.0 + up) {
            return Some(format!("train {k} not empty at the terminus"));
        }
    }
    None
}

fn conservation_suite() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let inst = full_scale_instance(&mut rng(5000 + seed));
        let tt = propagate_timetable(&inst.plan, &inst.cfg, None).unwrap();
        let fr = simulate_loading(&tt, &inst.plan.formations, &inst.cfg, &inst.dm).unwrap();
        if let Some(msg) = invariant_violation(&fr) {
            failures.push(format!("seed {seed}: {msg}"));
        }
        let mut unlimited = inst.cfg.clone();
        for f in &mut unlimited.formation_catalog {
            f.capacity = 1e12;
        }
        let fr = simulate_loading(&tt, &inst.plan.formations, &unlimited, &inst.dm).unwrap();
        if waiting_time_objective(&fr, &inst.dm).extra != 0.0 || two_train_violation(&fr) != 0.0 {
            failures.push(format!("seed {seed}: left-behind under unlimited capacity"));
        }
    }
    let el = start.elapsed();
    outcome(
        failures.is_empty() && el < Duration::from_secs(30),
        format!("200 instances, {} failures {:?}, {:.2}s", failures.len(), failures.iter().take(3).collect::<Vec<_>>(), el.as_secs_f64()),
    )
}

/// Midpoint rule with compensated summation. Breakpoints, `t0` and `d` sit
/// on the step grid, so each step integrates a linear function.
fn quadrature(dm: &DemandModel, t0: f64, d: f64, step: f64) -> f64 {
    let rate = dm.rate(0, 1).unwrap();
    let n = ((d - t0) / step).round() as usize;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for s in 0..n {
        let t = t0 + (s as f64 + 0.5) * step;
        let y = rate.rate_at(t) * (d - t) * step - comp;
        let next = sum + y;
        comp = (next - sum) - y;
        sum = next;
    }
    sum
}

fn integral_correctness() -> Outcome {
    let mut r = rng(77);
    let period = StudyPeriod::new(0.0, 60.0, 5.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let blocks: Vec<(usize, usize, f64, f64, f64)> = (0..r.gen_range(1..8))
            .map(|_| {
                let a = r.gen_range(0..400) as f64 * 0.125;
                let b = a + r.gen_range(1..160) as f64 * 0.125;
                (0, 1, a, b, r.gen_range(0.0..40.0))
            })
            .collect();
        let dm = DemandModel::from_blocks(period, 2, &blocks).unwrap();
        let t0 = r.gen_range(0..300) as f64 * 0.125;
        let d = t0 + r.gen_range(0..180) as f64 * 0.125;
        let exact = dm.first_wait_integral(0, 1, t0, d);
        worst = worst.max((exact - quadrature(&dm, t0, d, 1e-3)).abs());
    }
    outcome(worst <= 1e-6, format!("100 rate functions, max deviation {worst:.2e}"))
}

fn monotone(h: &[GenerationStats]) -> bool {
    h.windows(2).all(|w| w[1].best >= w[0].best)
}

fn ga_determinism(sc: &Scenario, report: &ExperimentReport) -> Outcome {
    let c = &sc.config;
    let mut runs = 0;
    let mut ok = true;
    for seed in 0..3u64 {
        let p = GaParams { max_generations: 80, ..c.ga.with_seed(seed) };
        let a = optimize_formation_and_timetable(&c.line, &sc.scheduled, &c.bounds, &c.period, c.n_trains, &p).unwrap();
        let b = optimize_formation_and_timetable(&c.line, &sc.scheduled, &c.bounds, &c.period, c.n_trains, &p).unwrap();
        ok &= a.history == b.history && a.plan == b.plan && monotone(&a.history);
        let d = sc.sample_delays(seed).unwrap();
        let dm = sc.realize(&d).unwrap();
        let s2 = Stage2Problem::new(&a.plan, &c.line, &dm, c.bounds).unwrap();
        let x = evolve(&s2, &p).unwrap();
        let y = evolve(&s2, &p).unwrap();
        ok &= x.history == y.history && x.best == y.best && monotone(&x.history);
        runs += 4;
    }
    for cells in &report.cells {
        for cell in cells {
            ok &= monotone(&cell.stage1_history) && monotone(&cell.stage2_history);
            runs += 1;
        }
    }
    outcome(ok, format!("{runs} runs checked for identical traces and non-decreasing best fitness"))
}

fn known_optimum() -> Outcome {
    let mut cfg = ScenarioConfig::beijing9();
    let c = &mut cfg;
    let n = c.line.n_stations();
    // One OD pair, first to last station, filling a 4-car train every 5 min.
    let cap4 = c.line.capacity(FormationId(4)).unwrap();
    let rate = cap4 / 5.0;
    let dm = DemandModel::from_blocks(c.period, n, &[(0, n - 1, c.period.start, c.period.end, rate)]).unwrap();
    let horizon = c.period.last_departure_anchor() - c.period.start;
    let optimum = (n - 1) as f64 * (c.n_trains as f64 * cap4 - rate * horizon);
    let mut hits = 0;
    let mut parts = Vec::new();
    let mut slowest = Duration::ZERO;
    for seed in SEEDS {
        let t = Instant::now();
        let out = optimize_formation_and_timetable(&c.line, &dm, &c.bounds, &c.period, c.n_trains, &c.ga.with_seed(seed)).unwrap();
        slowest = slowest.max(t.elapsed());
        let gap = (out.spare + out.violation * c.line.max_capacity() - optimum) / optimum;
        hits += usize::from(gap.abs() <= 0.01);
        parts.push(format!("{:.2}%", 100.0 * gap));
    }
    outcome(
        hits >= 4 && slowest <= Duration::from_secs(120),
        format!("optimum Z1 {optimum:.0}; gaps {}; {hits}/5 within 1%; slowest seed {:.1}s", parts.join(" "), slowest.as_secs_f64()),
    )
}

fn row<'a>(r: &'a ExperimentReport, label: &str) -> &'a hubrail::harness::SummaryRow {
    r.summary.iter().find(|s| s.label == label).expect("label present")
}

fn cells<'a>(r: &'a ExperimentReport, label: &str) -> &'a [hubrail::harness::CellResult] {
    let idx = r.labels.iter().position(|l| l == label).expect("label present");
    &r.cells[idx]
}

fn strategy_ordering(r: &ExperimentReport, elapsed: Duration) -> Outcome {
    let w = |l| row(r, l).average_wait;
    let ordered = w("S1") >= w("S2") && w("S2") >= w("S3") && w("S3") >= w("FS");
    let imp = (w("S1") - w("FS")) / w("S1");
    let std_ok = row(r, "FS").bin_wait_std <= row(r, "S1").bin_wait_std;
    outcome(
        ordered && imp >= 0.04 && std_ok && elapsed <= Duration::from_secs(1800),
        format!(
            "S1 {:.3} S2 {:.3} S3 {:.3} FS {:.3}; FS improvement {:.2}%; bin std FS {:.2} vs S1 {:.2}; {:.0}s",
            w("S1"),
            w("S2"),
            w("S3"),
            w("FS"),
            100.0 * imp,
            row(r, "FS").bin_wait_std,
            row(r, "S1").bin_wait_std,
            elapsed.as_secs_f64()
        ),
    )
}

fn no_delay_comparison(r: &ExperimentReport) -> Outcome {
    let (s1, fs) = (row(r, "S1-N").average_wait, row(r, "FS-N").average_wait);
    let imp = (s1 - fs) / s1;
    outcome(fs <= s1 && imp >= 0.02, format!("S1-N {s1:.3} FS-N {fs:.3}; improvement {:.2}%", 100.0 * imp))
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn travel_time_stability(sc: &Scenario, r: &ExperimentReport) -> Outcome {
    let c = &sc.config;
    let b = &c.bounds;
    let run: f64 = c.line.run_times.iter().sum();
    let stops = (c.line.n_stations() - 2) as f64;
    let (lo, hi) = (run + stops * (b.dwell_min - b.hold_max), run + stops * (b.dwell_max + b.hold_max));
    let mut identity_ok = true;
    for cells in &r.cells {
        for cell in cells {
            for (k, t) in cell.travel_times.iter().enumerate() {
                let holds: f64 = cell.holding.as_ref().map_or(0.0, |h| h.holds[k].iter().sum());
                let exact = run + cell.plan.dwell_times[k].iter().sum::<f64>() + holds;
                identity_ok &= (t - exact).abs() <= 1e-9 && *t >= lo - 1e-9 && *t <= hi + 1e-9;
            }
        }
    }
    let fs = cells(r, "FS");
    let mut s1_times = Vec::new();
    for cell in fs {
        let dwell = mean(cell.plan.dwell_times.iter().flatten().copied());
        let spec = StrategySpec { fixed_dwell: Some(dwell), ..StrategySpec::standard(StrategyKind::S1, true, &c.baseline) };
        let seeds = CellSeeds::derive(cell.seed);
        let (dm, delays) = realized_demand(&spec, sc, seeds).unwrap();
        let (plan, hist) = base_plan(&spec, sc, seeds).unwrap();
        let sp = finish_plan(&spec, sc, plan, hist, &dm, seeds).unwrap();
        let m = measure("S1", cell.seed, sp, sc, &dm, delays, r.warmup).unwrap();
        s1_times.extend(m.travel_times);
    }
    let fs_mean = mean(fs.iter().flat_map(|c| c.travel_times.iter().copied()));
    let s1_mean = mean(s1_times.into_iter());
    outcome(
        (fs_mean - s1_mean).abs() <= 0.3 && identity_ok,
        format!(
            "FS {fs_mean:.3} vs S1 {s1_mean:.3} with matched dwell (diff {:+.3}); identity and bounds [{lo:.2}, {hi:.2}] {}",
            fs_mean - s1_mean,
            if identity_ok { "hold" } else { "broken" }
        ),
    )
}

fn left_behind_reduction(r: &ExperimentReport) -> Outcome {
    let total = |l| cells(r, l).iter().map(|c| c.left_behind_mass).sum::<f64>();
    let (s1, fs) = (total("S1"), total("FS"));
    outcome(fs <= 0.5 * s1, format!("post-warmup left-behind FS {fs:.0} vs S1 {s1:.0} ({:.1}%)", 100.0 * fs / s1))
}

fn holding_never_hurts(sc: &Scenario, r: &ExperimentReport) -> Outcome {
    let c = &sc.config;
    let mut checked = 0;
    let mut worse = Vec::new();
    let mut check = |plan: &TrainPlan, dm: &DemandModel, genes: Vec<f64>, tag: String| {
        let p = Stage2Problem::new(plan, &c.line, dm, c.bounds).unwrap();
        let zero = vec![0.0; genes.len()];
        let (held, base) = (p.evaluate(&genes).unwrap(), p.evaluate(&zero).unwrap());
        checked += 1;
        if held.waiting.total() > base.waiting.total() + 1e-9 {
            worse.push(format!("{tag}: {:.1} > {:.1}", held.waiting.total(), base.waiting.total()));
        }
    };
    for (spec, cells) in StrategySpec::six_cases(&c.baseline).iter().zip(&r.cells) {
        if !spec.kind.holds() {
            continue;
        }
        for cell in cells {
            let (dm, _) = realized_demand(spec, sc, CellSeeds::derive(cell.seed)).unwrap();
            check(&cell.plan, &dm, genes_from_holding(cell.holding.as_ref().unwrap()), format!("{} seed {}", cell.label, cell.seed));
        }
    }
    let s1 = Stage1Problem::new(&c.line, &sc.scheduled, c.bounds, c.period, c.n_trains).unwrap();
    let mut rr = rng(99);
    for seed in 0..20u64 {
        let plan = hubrail::stage1::decode_stage1(&hubrail::ga::Problem::random_individual(&s1, &mut rr), &c.line).unwrap();
        let dm = sc.realize(&sc.sample_delays(seed).unwrap()).unwrap();
        let out = hubrail::stage2::optimize_holding(&plan, &c.line, &dm, &c.bounds, &GaParams { max_generations: 60, ..c.stage2_params().with_seed(seed) }).unwrap();
        check(&plan, &dm, genes_from_holding(&out.holding), format!("random plan {seed}"));
    }
    outcome(worse.is_empty(), format!("{checked} runs, {} worse than zero holding {:?}", worse.len(), worse.iter().take(3).collect::<Vec<_>>()))
}

fn main() -> ExitCode {
    let sc = ScenarioConfig::beijing9().materialize().expect("bundled config");
    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();
    lines.push((1, "oracle equivalence", oracle_equivalence()));
    lines.push((2, "conservation suite", conservation_suite()));
    lines.push((3, "integral correctness", integral_correctness()));
    lines.push((5, "stage-1 known optimum", known_optimum()));

    let start = Instant::now();
    let report = run_experiment(&StrategySpec::six_cases(&sc.config.baseline), &sc, &SEEDS, 20.0).expect("six-case experiment");
    let elapsed = start.elapsed();
    lines.push((4, "GA determinism and monotonicity", ga_determinism(&sc, &report)));
    lines.push((6, "strategy ordering", strategy_ordering(&report, elapsed)));
    lines.push((7, "no-delay comparison", no_delay_comparison(&report)));
    lines.push((8, "travel-time stability", travel_time_stability(&sc, &report)));
    lines.push((9, "left-behind reduction", left_behind_reduction(&report)));
    lines.push((10, "holding never hurts", holding_never_hurts(&sc, &report)));
    lines.sort_by_key(|l| l.0);

    let s1 = cells(&report, "S1");
    let fs = cells(&report, "FS");
    let per_seed = s1.iter().zip(fs).all(|(a, b)| b.average_wait < a.average_wait);

    for (n, name, o) in &lines {
        println!("{} criterion {n:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "{} check: FS average wait below S1 in every seed ({})",
        if per_seed { "PASS" } else { "FAIL" },
        s1.iter().zip(fs).map(|(a, b)| format!("{:.3}/{:.3}", b.average_wait, a.average_wait)).collect::<Vec<_>>().join(" ")
    );
    if lines.iter().all(|l| l.2.pass) && per_seed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
