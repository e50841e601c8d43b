mod common;

use common::*;
use hubrail::config::{Scenario, ScenarioConfig};
use hubrail::demand::{CommuterTable, DemandModel};
use hubrail::ga::{GaParams, Problem};
use hubrail::harness::{compute_bin_metrics, run_experiment, ExperimentReport, StrategyKind, StrategySpec};
use hubrail::model::{FormationId, OperationBounds, StudyPeriod, TrainPlan};
use hubrail::oracle::{discretize, micro_simulate, Boarding};
use hubrail::report::emit_report;
use hubrail::simulator::{evaluate, propagate_timetable};
use hubrail::stage1::{encode_stage1, Stage1Problem};
use hubrail::stage2::{genes_from_holding, optimize_holding, Stage2Problem};
use hubrail::validate::validate_plan;

fn clock(h: u32, m: u32) -> f64 {
    (h * 60 + m) as f64
}

#[test]
fn eighteen_five_minute_trains_validate_against_the_anchor() {
    let cfg = ScenarioConfig::beijing9();
    let period = StudyPeriod::new(clock(7, 30), clock(9, 10), 5.0).unwrap().with_last_departure(clock(8, 55)).unwrap();
    let deps: Vec<f64> = (0..18).map(|k| clock(7, 30) + 5.0 * k as f64).collect();
    let plan = TrainPlan::uniform(FormationId(6), deps, 0.5, cfg.line.n_stations());
    let b = OperationBounds { headway_min: 4.85, headway_max: 5.15, ..cfg.bounds };
    let r = validate_plan(&plan, &cfg.line, &b, &period).unwrap();
    assert!(r.is_valid(), "{:?}", r.violations);
}

#[test]
fn four_car_fleet_beats_eight_car_fleet_on_exact_demand() {
    let cfg = line(vec![2.0; 4], &[(4, 960.0), (8, 1920.0)]);
    let k = 6;
    let period = StudyPeriod::new(0.0, 5.0 * k as f64, 5.0).unwrap();
    // One 4-car load arrives during every headway.
    let dm = DemandModel::from_blocks(period, 5, &[(0, 4, 0.0, period.end, 960.0 / 5.0)]).unwrap();
    let deps: Vec<f64> = (1..=k).map(|i| 5.0 * i as f64).collect();
    let prob = Stage1Problem::new(&cfg, &dm, bounds(4.85, 5.15), period, k).unwrap();
    let small = encode_stage1(&TrainPlan::uniform(FormationId(4), deps.clone(), 0.5, 5));
    let large = encode_stage1(&TrainPlan::uniform(FormationId(8), deps, 0.5, 5));
    assert!(prob.evaluate(&small).unwrap().violation < 1e-9);
    assert!(prob.fitness(&small).unwrap() > prob.fitness(&large).unwrap());
}

#[test]
fn violation_free_plan_outranks_violating_twin() {
    // Both plans board all 25 passengers on the same formations, so spare
    // capacity is equal. Only the second plan strands 5 of them twice.
    let cfg = line(vec![2.0, 2.0], &[(1, 10.0)]);
    let period = StudyPeriod::new(0.0, 30.0, 5.0).unwrap();
    let dm = DemandModel::from_blocks(period, 3, &[(0, 1, 0.0, 1.0, 25.0)]).unwrap();
    let b = OperationBounds { headway_min: 0.5, headway_max: 12.0, ..bounds(0.5, 12.0) };
    let prob = Stage1Problem::new(&cfg, &dm, b, period, 3).unwrap();
    let clean = encode_stage1(&TrainPlan::uniform(FormationId(1), vec![0.5, 12.0, 22.0], 0.5, 3));
    let stranding = encode_stage1(&TrainPlan::uniform(FormationId(1), vec![2.0, 12.0, 22.0], 0.5, 3));
    let (a, s) = (prob.evaluate(&clean).unwrap(), prob.evaluate(&stranding).unwrap());
    assert!((a.spare - s.spare).abs() < 1e-9);
    assert!(a.violation < 1e-9 && s.violation >= 1.0);
    assert!(prob.fitness(&clean).unwrap() > prob.fitness(&stranding).unwrap());
}

#[test]
fn holding_optimizer_recovers_grid_search_gain() {
    // A late feeder lands at station 3 just after train 2 has left it.
    let cfg = line(vec![2.0; 4], &[(4, 960.0)]);
    let plan = TrainPlan::uniform(FormationId(4), vec![0.0, 5.0, 10.0, 15.0], 0.5, 5);
    let period = StudyPeriod::new(0.0, 25.0, 5.0).unwrap();
    let dm = DemandModel::from_blocks(period, 5, &[(2, 4, 10.0, 10.4, 200.0), (0, 4, 0.0, 25.0, 1.0)]).unwrap();
    let b = OperationBounds { headway_min: 3.5, headway_max: 6.5, ..bounds(3.5, 6.5) };
    let prob = Stage2Problem::new(&plan, &cfg, &dm, b).unwrap();
    let zero = vec![0.0; 4 * 3];
    let base = prob.penalized_objective(&zero).unwrap();
    // Gene of train 2 at the third station.
    let gene = 3 + 1;
    let mut grid_best = base;
    for s in -100..=100 {
        let mut g = zero.clone();
        g[gene] = s as f64 / 100.0;
        if prob.repair(&mut g).is_ok() {
            grid_best = grid_best.min(prob.penalized_objective(&g).unwrap());
        }
    }
    assert!(grid_best < base - 1.0);
    let params = GaParams { population_size: 30, max_generations: 80, ..GaParams::default() }.with_seed(11);
    let out = optimize_holding(&plan, &cfg, &dm, &b, &params).unwrap();
    let got = prob.penalized_objective(&genes_from_holding(&out.holding)).unwrap();
    assert!(base - got >= 0.8 * (base - grid_best), "GA gain {} vs grid gain {}", base - got, base - grid_best);
}

#[test]
fn constant_demand_waits_half_a_headway_per_bin() {
    let cfg = line(vec![1.5, 2.0, 2.5], &[(1, 1e6)]);
    let period = StudyPeriod::new(0.0, 40.0, 5.0).unwrap();
    let deps: Vec<f64> = (0..=8).map(|k| 5.0 * k as f64).collect();
    let plan = TrainPlan::uniform(FormationId(1), deps, 0.5, 4);
    let dm = DemandModel::from_blocks(period, 4, &[(0, 1, 0.0, 40.0, 3.0), (0, 3, 0.0, 40.0, 7.0)]).unwrap();
    let ev = evaluate(&plan, &cfg, &dm, None).unwrap();
    let bins = compute_bin_metrics(&ev.flow, &dm, &period, 0.0, 0);
    assert_eq!(bins.len(), 8);
    for b in &bins {
        assert!(!b.empty);
        assert!((b.average_wait - 2.5).abs() < 1e-9, "{b:?}");
    }
}

#[test]
fn bin_waits_match_uniform_oracle() {
    let mut r = rng(21);
    for _ in 0..20 {
        let inst = small_instance(&mut r, 5, 4, false);
        let ev = evaluate(&inst.plan, &inst.cfg, &inst.dm, None).unwrap();
        let bins = compute_bin_metrics(&ev.flow, &inst.dm, &inst.period, 0.0, inst.cfg.hub());
        let edges: Vec<f64> = (0..=inst.period.n_bins()).map(|b| inst.period.bin_start(b)).collect();
        let events = discretize(&inst.dm, &ev.flow.timetable, &edges);
        let micro = micro_simulate(&ev.flow.timetable, &inst.plan.formations, &inst.cfg, &events, Boarding::Uniform).unwrap();
        for (bi, b) in bins.iter().enumerate() {
            let (lo, hi) = (edges[bi], edges[bi + 1]);
            let (mut mass, mut wait) = (0.0, 0.0);
            for (e, o) in events.iter().zip(&micro.passengers) {
                if e.time >= lo && e.time < hi {
                    mass += e.weight - o.unserved;
                    wait += o.first_wait + o.extra_wait;
                }
            }
            assert!(close(b.passengers, mass, 1e-6), "bin {bi}: {} vs {mass}", b.passengers);
            assert!(close(b.total_wait, wait, 1e-6), "bin {bi}: {} vs {wait}", b.total_wait);
        }
    }
}

fn quick_scenario() -> Scenario {
    let mut cfg = ScenarioConfig::beijing9();
    cfg.ga = GaParams { population_size: 8, max_generations: 3, ..cfg.ga };
    cfg.stage2_ga = None;
    cfg.materialize().unwrap()
}

#[test]
fn zero_demand_reports_zero_wait_with_flag() {
    let mut sc = quick_scenario();
    let n = sc.config.line.n_stations();
    sc.commuter = CommuterTable::zeros(sc.config.period, n);
    sc.outer.clear();
    sc.scheduled = DemandModel::empty(sc.config.period, n);
    let spec = StrategySpec::standard(StrategyKind::S1, false, &sc.config.baseline);
    let rep = run_experiment(&[spec], &sc, &[1], 20.0).unwrap();
    let cell = &rep.cells[0][0];
    assert_eq!(cell.average_wait, 0.0);
    assert!(cell.bins.iter().all(|b| b.empty && b.average_wait == 0.0));
}

#[test]
fn repeated_specs_give_identical_rows() {
    let sc = quick_scenario();
    let b = sc.config.baseline;
    let specs = [StrategySpec::standard(StrategyKind::S3, true, &b), StrategySpec::standard(StrategyKind::S3, true, &b)];
    let rep = run_experiment(&specs, &sc, &[4], 20.0).unwrap();
    assert_eq!(rep.summary[0], rep.summary[1]);
}

#[test]
fn delay_off_fs_is_fs_n() {
    let sc = quick_scenario();
    let spec = StrategySpec::standard(StrategyKind::FS, false, &sc.config.baseline);
    assert_eq!(spec.label(), "FS-N");
    let a = run_experiment(&[spec], &sc, &[2], 20.0).unwrap();
    let b = run_experiment(&[spec], &sc, &[2], 20.0).unwrap();
    let (x, y) = (&a.cells[0][0], &b.cells[0][0]);
    assert!(x.delays.is_none());
    assert_eq!(x.plan, y.plan);
    assert_eq!(x.holding, y.holding);
    assert_eq!(x.departures.to_rows(), y.departures.to_rows());
    assert_eq!(a.summary, b.summary);
    // With delay off, holding is tuned against the scheduled demand.
    let tt = propagate_timetable(&x.plan, &sc.config.line, x.holding.as_ref()).unwrap();
    let ev = evaluate(&x.plan, &sc.config.line, &sc.scheduled, x.holding.as_ref()).unwrap();
    assert_eq!(tt.departures.to_rows(), x.departures.to_rows());
    assert!((ev.waiting.total() - x.z2).abs() < 1e-9);
}

#[test]
fn baseline_runs_on_1440_trains() {
    let sc = quick_scenario();
    let spec = StrategySpec::standard(StrategyKind::S1, true, &sc.config.baseline);
    let rep = run_experiment(&[spec], &sc, &[1], 20.0).unwrap();
    let plan = &rep.cells[0][0].plan;
    assert!(plan.formations.iter().all(|f| sc.config.line.capacity(*f) == Some(1440.0)));
}

#[test]
fn empty_strategy_list_writes_manifest_only() {
    let sc = quick_scenario();
    let rep: ExperimentReport = run_experiment(&[], &sc, &[1, 2], 20.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&rep, dir.path()).unwrap();
    assert_eq!(files.len(), 1);
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["manifest.json".to_string()]);
}
