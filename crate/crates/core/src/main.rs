use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hubrail::config::{Scenario, ScenarioConfig};
use hubrail::demand::DelayScenario;
use hubrail::ga::write_history_csv;
use hubrail::harness::{run_experiment, CellSeeds, StrategySpec, DEFAULT_WARMUP};
use hubrail::model::{HoldingPlan, TrainPlan};
use hubrail::report::{emit_report, write_run_manifest};
use hubrail::simulator::{evaluate, write_flow_csv};
use hubrail::stage1::optimize_formation_and_timetable;
use hubrail::stage2::optimize_holding;
use hubrail::validate::validate_plan;
use hubrail::{Error, Result};

#[derive(Parser)]
#[command(name = "hubrail", version, about = "Train formation, timetable and holding optimization for a hub-fed rail line")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario config (JSON). Defaults to the bundled beijing9 config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory, or file for `sample-scenario`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of consecutive seeds, starting at --seed, for multi-seed runs.
    #[arg(long, global = true, default_value_t = 5)]
    seeds: usize,
    /// Minutes at the start of the period excluded from metrics.
    #[arg(long, global = true, default_value_t = DEFAULT_WARMUP)]
    warmup: f64,
    /// Overrides the number of GA generations of both stages.
    #[arg(long, global = true)]
    generations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize formations and timetable, holding control, or both.
    Optimize {
        #[arg(long, conflicts_with_all = ["stage2", "full"])]
        stage1: bool,
        #[arg(long, conflicts_with = "full", requires = "plan")]
        stage2: bool,
        #[arg(long)]
        full: bool,
        /// Train plan JSON used as the stage-2 input.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Evaluate stage 2 against scheduled demand instead of a sampled
        /// delay scenario.
        #[arg(long)]
        no_delay: bool,
    },
    /// Evaluate a plan and write per-cell flows.
    Simulate {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        holding: Option<PathBuf>,
        /// Delay scenario JSON; scheduled demand when absent.
        #[arg(long)]
        delays: Option<PathBuf>,
    },
    /// Run the six-case strategy comparison.
    Compare,
    /// Sample a feeder delay scenario.
    SampleScenario,
}

fn load_scenario(g: &Global) -> Result<Scenario> {
    let mut cfg = match &g.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::beijing9(),
    };
    if let Some(n) = g.generations {
        cfg.ga.max_generations = n;
        if let Some(s2) = cfg.stage2_ga.as_mut() {
            s2.max_generations = n;
        }
    }
    cfg.materialize()
}

fn out_dir(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    let text = fs::read_to_string(p)?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", p.display())))
}

fn write_json<T: serde::Serialize>(p: &Path, v: &T) -> Result<PathBuf> {
    let mut f = fs::File::create(p)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    f.write_all(b"\n")?;
    Ok(p.to_path_buf())
}

fn write_history(p: &Path, h: &[hubrail::ga::GenerationStats]) -> Result<PathBuf> {
    write_history_csv(h, fs::File::create(p)?)?;
    Ok(p.to_path_buf())
}

fn optimize(g: &Global, stage1: bool, stage2: bool, plan_path: Option<&Path>, no_delay: bool) -> Result<()> {
    let sc = load_scenario(g)?;
    let c = &sc.config;
    let dir = out_dir(g);
    fs::create_dir_all(&dir)?;
    let seeds = CellSeeds::derive(g.seed);
    let mut written = Vec::new();
    let plan: TrainPlan = if stage1 {
        let out = optimize_formation_and_timetable(&c.line, &sc.scheduled, &c.bounds, &c.period, c.n_trains, &c.ga.with_seed(seeds.stage1))?;
        written.push(write_json(&dir.join("plan.json"), &out.plan)?);
        written.push(write_history(&dir.join("stage1_history.csv"), &out.history)?);
        println!("stage 1: spare capacity {:.2}, third-train violation {:.2}", out.spare, out.violation);
        out.plan
    } else {
        let p = plan_path.ok_or_else(|| Error::Malformed("--plan is required".into()))?;
        let plan: TrainPlan = read_json(p)?;
        let report = validate_plan(&plan, &c.line, &c.bounds, &c.period)?;
        for v in &report.violations {
            eprintln!("warning: {v}");
        }
        plan
    };
    if stage2 {
        let dm = if no_delay {
            sc.scheduled.clone()
        } else {
            let d = sc.sample_delays(seeds.delay)?;
            written.push(write_json(&dir.join("delays.json"), &d)?);
            sc.realize(&d)?
        };
        let out = optimize_holding(&plan, &c.line, &dm, &c.bounds, &c.stage2_params().with_seed(seeds.stage2))?;
        written.push(write_json(&dir.join("holding.json"), &out.holding)?);
        written.push(write_history(&dir.join("stage2_history.csv"), &out.history)?);
        println!("stage 2: total waiting {:.2} pax-min (no holding {:.2}), third-train violation {:.2}", out.waiting, out.zero_holding_waiting, out.violation);
    }
    let command = match (stage1, stage2, no_delay) {
        (true, true, false) => "optimize --full",
        (true, true, true) => "optimize --full --no-delay",
        (true, false, _) => "optimize --stage1",
        (false, _, false) => "optimize --stage2",
        (false, _, true) => "optimize --stage2 --no-delay",
    };
    let inputs: Vec<PathBuf> = plan_path.filter(|_| !stage1).map(Path::to_path_buf).into_iter().collect();
    write_run_manifest(&dir, command, g.seed, &serde_json::to_string(c)?, &inputs, &written)?;
    Ok(())
}

fn simulate(g: &Global, plan_path: &Path, holding_path: Option<&Path>, delays: Option<&Path>) -> Result<()> {
    let sc = load_scenario(g)?;
    let c = &sc.config;
    let plan: TrainPlan = read_json(plan_path)?;
    let holding: Option<HoldingPlan> = holding_path.map(read_json).transpose()?;
    let dm = match delays {
        Some(p) => sc.realize(&read_json::<DelayScenario>(p)?)?,
        None => sc.scheduled.clone(),
    };
    let ev = evaluate(&plan, &c.line, &dm, holding.as_ref())?;
    let dir = out_dir(g);
    fs::create_dir_all(&dir)?;
    let flow = dir.join("flow.csv");
    write_flow_csv(&ev.flow, fs::File::create(&flow)?)?;
    let inputs: Vec<PathBuf> = [Some(plan_path), holding_path, delays].into_iter().flatten().map(Path::to_path_buf).collect();
    write_run_manifest(&dir, "simulate", g.seed, &serde_json::to_string(c)?, &inputs, &[flow])?;
    println!(
        "spare capacity {:.2}\nwaiting first-train {:.2} extra {:.2} total {:.2}\nthird-train violation {:.2}",
        ev.spare,
        ev.waiting.first,
        ev.waiting.extra,
        ev.waiting.total(),
        ev.violation
    );
    Ok(())
}

fn compare(g: &Global) -> Result<()> {
    let sc = load_scenario(g)?;
    let specs = StrategySpec::six_cases(&sc.config.baseline);
    let seeds: Vec<u64> = (0..g.seeds as u64).map(|i| g.seed + i).collect();
    let report = run_experiment(&specs, &sc, &seeds, g.warmup)?;
    let dir = out_dir(g);
    emit_report(&report, &dir)?;
    println!("{:<6} {:>10} {:>12} {:>8}", "case", "avg wait", "improvement", "bin std");
    for r in &report.summary {
        let imp = r.improvement.map(|x| format!("{:.2}%", 100.0 * x)).unwrap_or_else(|| "-".into());
        println!("{:<6} {:>10.3} {:>12} {:>8.2}", r.label, r.average_wait, imp, r.bin_wait_std);
    }
    println!("report written to {}", dir.display());
    Ok(())
}

fn sample_scenario(g: &Global) -> Result<()> {
    let sc = load_scenario(g)?;
    let d = sc.sample_delays(g.seed)?;
    match &g.out {
        Some(p) => write_json(p, &d).map(|_| ()),
        None => {
            println!("{}", serde_json::to_string_pretty(&d)?);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Optimize { stage1, stage2, full, plan, no_delay } => {
            let (s1, s2) = match (stage1, stage2, full) {
                (_, _, true) => (true, true),
                (false, true, false) => (false, true),
                _ => (true, false),
            };
            optimize(g, s1, s2, plan.as_deref(), *no_delay)
        }
        Command::Simulate { plan, holding, delays } => simulate(g, plan, holding.as_deref(), delays.as_deref()),
        Command::Compare => compare(g),
        Command::SampleScenario => sample_scenario(g),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
