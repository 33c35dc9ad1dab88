use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use alertopt::bifurcation::{branch_table, fit_branches, write_branch_csv, FastSubsystem, FitGrid};
use alertopt::light::LightSignal;
use alertopt::optimizer::{
    average_alertness, cns_compare, cns_schedule, optimize_scenario_from, phase_delay_h,
    preparation_sweep, randomized_shift_study, reference_solution, DecisionVariables,
    OptimizerConfig, Scenario,
};
use alertopt::simulator::{PeriodicOptions, SimulationSpan, SleepScheduleSpec, Trajectory};
use alertopt::validation::{fit_model, DatasetSeries, ScoreLabel};
use alertopt::{ModelParams, Registry};
use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Overrides the default output directory when `--out` is not given.
const OUT_ENV: &str = "ALERTOPT_OUT";

#[derive(Parser, Debug)]
#[command(name = "alertopt", version, about = "Sleep/circadian simulation and schedule optimization")]
struct Cli {
    /// Model parameters as JSON (defaults to the built-in set).
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Output directory (default: $ALERTOPT_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for batch studies.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a model from its nominal state.
    Simulate {
        #[arg(long, default_value = "pr-hybrid")]
        model: String,
        /// Light schedule JSON (default: 16 h of 150 lux from 6 AM).
        #[arg(long)]
        light: Option<PathBuf>,
        /// Sleep schedule JSON (default: spontaneous).
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        days: f64,
    },
    /// Find the 24 h periodic orbit under a light schedule.
    Entrain {
        #[arg(long, default_value = "pr-hybrid")]
        model: String,
        #[arg(long)]
        light: Option<PathBuf>,
    },
    /// Optimize light and sleep for a scenario.
    Optimize {
        /// Bundled scenario name or a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// `periodic` for the built-in initial guess, or a decision-variable JSON file.
        #[arg(long, default_value = "periodic")]
        init: String,
    },
    /// Fit predicted alertness to a subjective-score dataset.
    Validate {
        /// CSV with columns `t_h,mean,std`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        label: ScoreLabel,
        /// Models to fit (default: all registered).
        #[arg(long)]
        model: Vec<String>,
    },
    /// Batch experiments.
    Study {
        #[arg(long)]
        kind: StudyKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Scenario for prep-sweep and cns-compare.
        #[arg(long)]
        scenario: Option<String>,
        /// Largest number of preparation days for prep-sweep.
        #[arg(long, default_value_t = 13)]
        max_days: u32,
    },
    /// Fast-subsystem equilibria, saddle nodes and fitted branches.
    Branches {
        #[arg(long, default_value_t = 0.0)]
        d_min: f64,
        #[arg(long, default_value_t = 4.0)]
        d_max: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Also refit the branch polynomials and report them.
        #[arg(long)]
        refit: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StudyKind {
    PrepSweep,
    RandomShifts,
    CnsCompare,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<String>,
    seed: Option<u64>,
    output_dir: String,
    version: &'static str,
    wall_time_s: f64,
}

struct Ctx {
    params: ModelParams,
    params_path: Option<PathBuf>,
    out: PathBuf,
    registry: Registry,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn load_light(path: Option<&Path>) -> Result<LightSignal> {
    Ok(match path {
        Some(p) => LightSignal::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => LightSignal::reference_day(0.1)?,
    })
}

fn load_scenario(spec: &str) -> Result<Scenario> {
    if Path::new(spec).exists() {
        Ok(Scenario::load(Path::new(spec)).with_context(|| format!("reading {spec}"))?)
    } else {
        Ok(Scenario::bundled(spec)?)
    }
}

fn write_trajectory(ctx: &Ctx, stem: &str, traj: &Trajectory) -> Result<()> {
    traj.write_csv(&ctx.path(&format!("{stem}.csv")))?;
    traj.write_events_csv(&ctx.path(&format!("{stem}_events.csv")))?;
    Ok(())
}

fn simulate(ctx: &Ctx, model: &str, light: Option<&Path>, schedule: Option<&Path>, days: f64) -> Result<()> {
    if !(days >= 0.0 && days.is_finite()) {
        return Err(alertopt::Error::Config(format!("days must be non-negative, got {days}")).into());
    }
    let m = ctx.registry.model(model)?;
    let light = load_light(light)?;
    let schedule = match schedule {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SleepScheduleSpec>(&text)
                .map_err(alertopt::Error::from)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => SleepScheduleSpec::spontaneous(),
    };
    let cfg = m.default_integrator();
    let state = m.nominal_state(&ctx.params)?;
    let traj = m.simulate(
        &ctx.params,
        &state,
        false,
        &SimulationSpan {
            t0: 0.0,
            t1: 24.0 * days,
            light: &light,
            schedule: &schedule,
            cfg: &cfg,
        },
    )?;
    write_trajectory(ctx, "trajectory", &traj)?;
    log::info!("{} samples, {} events", traj.samples.len(), traj.events.len());
    Ok(())
}

#[derive(Serialize)]
struct EntrainSummary {
    model: String,
    wake_h: Option<f64>,
    sleep_h: Option<f64>,
    iterations: usize,
    final_mismatch: Option<f64>,
}

fn entrain(ctx: &Ctx, model: &str, light: Option<&Path>) -> Result<()> {
    let m = ctx.registry.model(model)?;
    let light = load_light(light)?;
    let sol = m.entrain(&ctx.params, &light, &m.default_integrator(), &PeriodicOptions::default())?;
    write_trajectory(ctx, "periodic", &sol.trajectory)?;
    let summary = EntrainSummary {
        model: model.to_string(),
        wake_h: sol.wake_time(),
        sleep_h: sol.sleep_time(),
        iterations: sol.iterations,
        final_mismatch: sol.mismatch_history.last().copied(),
    };
    ctx.write_json("entrain.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct OptimizeSummary {
    scenario: Option<String>,
    objective: String,
    initial_j: f64,
    j: f64,
    alertness_initial: f64,
    alertness: f64,
    a_avg: Option<f64>,
    iterations: usize,
    converged: bool,
}

fn optimize(ctx: &Ctx, scenario: &str, init: &str) -> Result<()> {
    let sc = load_scenario(scenario)?;
    let init = if init == "periodic" {
        None
    } else {
        let text = std::fs::read_to_string(init).with_context(|| format!("reading {init}"))?;
        Some(DecisionVariables::from_json(&text)?)
    };
    let reference = reference_solution(&ctx.params, sc.optimizer.step_h)?;
    let run = optimize_scenario_from(&ctx.params, &sc, &reference, init)?;
    let r = &run.result;
    std::fs::write(ctx.path("schedule.json"), r.variables.to_json()? + "\n")?;
    r.trajectory.write_csv(&ctx.path("trajectory.csv"))?;
    r.trajectory.write_events_csv(&ctx.path("trajectory_events.csv"))?;
    r.write_log_csv(&ctx.path("iterations.csv"))?;
    let summary = OptimizeSummary {
        scenario: sc.name.clone(),
        objective: sc.objective.clone(),
        initial_j: r.initial_j,
        j: r.j,
        alertness_initial: -r.initial_j,
        alertness: r.alertness(),
        a_avg: (sc.objective == "shift_work").then(|| average_alertness(r.j)),
        iterations: r.log.len().saturating_sub(1),
        converged: r.converged,
    };
    ctx.write_json("summary.json", &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn validate(ctx: &Ctx, dataset: &Path, label: ScoreLabel, models: &[String]) -> Result<()> {
    if !dataset.exists() {
        eprintln!("dataset {} not found; skipping validation", dataset.display());
        return Err(alertopt::Error::Config(format!("missing dataset {}", dataset.display())).into());
    }
    let data = DatasetSeries::load(label, dataset)?;
    let names: Vec<String> = if models.is_empty() {
        ctx.registry.model_names().into_iter().map(String::from).collect()
    } else {
        models.to_vec()
    };
    let mut reports = Vec::new();
    for name in &names {
        let m = ctx.registry.model(name)?;
        reports.push(fit_model(m.as_ref(), &ctx.params, &data)?);
    }
    ctx.write_json("fit_report.json", &reports)?;
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(())
}

#[derive(Serialize)]
struct CnsRow {
    nwti_cns_h: f64,
    nwti_optimized_h: f64,
    nwti_change_pct: f64,
    alertness_cns: f64,
    alertness_initial: f64,
    alertness_optimized: f64,
    phase_delay_day4_h: Option<f64>,
}

fn study(ctx: &Ctx, kind: StudyKind, seed: u64, n: usize, scenario: Option<&str>, max_days: u32) -> Result<()> {
    match kind {
        StudyKind::PrepSweep => {
            let sc = load_scenario(scenario.unwrap_or("night_shifts_naps"))?;
            let reference = reference_solution(&ctx.params, sc.optimizer.step_h)?;
            let days: Vec<u32> = (0..=max_days).collect();
            let points = preparation_sweep(&ctx.params, &sc, &days, &reference)?;
            let mut w = csv::Writer::from_path(ctx.path("prep_sweep.csv"))?;
            for p in &points {
                w.serialize(p)?;
            }
            w.flush()?;
            for p in &points {
                println!("{:>2} days: A_avg {:.4}", p.days, p.a_avg);
            }
        }
        StudyKind::RandomShifts => {
            if n == 0 {
                return Err(alertopt::Error::Config("--n must be at least 1".into()).into());
            }
            let reference = reference_solution(&ctx.params, OptimizerConfig::default().step_h)?;
            let summary = randomized_shift_study(&ctx.params, n, seed, OptimizerConfig::default(), &reference);
            let mut w = csv::Writer::from_path(ctx.path("random_shifts.csv"))?;
            for row in &summary.rows {
                w.serialize(row)?;
            }
            w.flush()?;
            let mut brief = serde_json::to_value(&summary)?;
            brief.as_object_mut().map(|o| o.remove("rows"));
            ctx.write_json("random_shifts_summary.json", &brief)?;
            println!("{}", serde_json::to_string_pretty(&brief)?);
        }
        StudyKind::CnsCompare => {
            let sc = load_scenario(scenario.unwrap_or("cumulative_three_shifts"))?;
            let reference = reference_solution(&ctx.params, sc.optimizer.step_h)?;
            let (cmp, run) = cns_compare(&ctx.params, &sc, &reference)?;
            let cns = cns_schedule(&ctx.params, &sc, run.start.x, run.start.asleep)?;
            write_trajectory(ctx, "cns_trajectory", &cns)?;
            write_trajectory(ctx, "optimized_trajectory", &run.result.trajectory)?;
            let t0 = sc.start_h();
            let phase = (sc.tf_h - t0 >= 84.0)
                .then(|| phase_delay_h(&run.result.trajectory, t0, t0 + 72.0, 12.0))
                .transpose()?;
            let row = CnsRow {
                nwti_cns_h: cmp.nwti_cns_h,
                nwti_optimized_h: cmp.nwti_optimized_h,
                nwti_change_pct: cmp.nwti_change_pct(),
                alertness_cns: cmp.alertness_cns,
                alertness_initial: cmp.alertness_initial,
                alertness_optimized: cmp.alertness_optimized,
                phase_delay_day4_h: phase,
            };
            let mut w = csv::Writer::from_path(ctx.path("cns_compare.csv"))?;
            w.serialize(&row)?;
            w.flush()?;
            println!("{}", serde_json::to_string_pretty(&row)?);
        }
    }
    Ok(())
}

fn branches(ctx: &Ctx, d_min: f64, d_max: f64, step: f64, refit: bool) -> Result<()> {
    if !(step > 0.0 && d_max > d_min) {
        return Err(alertopt::Error::Config("need d_max > d_min and step > 0".into()).into());
    }
    let np = &ctx.params.neuronal;
    let fast = FastSubsystem::new(np)?;
    let (lo, hi) = fast.saddle_nodes()?;
    let n = ((d_max - d_min) / step).round() as usize;
    let ds: Vec<f64> = (0..=n).map(|k| d_min + (d_max - d_min) * k as f64 / n as f64).collect();
    let rows = branch_table(&fast, &ctx.params.branches, &ds);
    write_branch_csv(&ctx.path("branches.csv"), &rows)?;
    let mut summary = serde_json::json!({ "saddle_nodes": [lo, hi] });
    if refit {
        summary["refit"] = serde_json::to_value(fit_branches(np, &FitGrid::default())?)?;
    }
    ctx.write_json("branches.json", &summary)?;
    println!("saddle nodes: D_v = {lo:.6}, {hi:.6}");
    Ok(())
}

fn run(cli: &Cli) -> Result<(&'static str, Option<u64>)> {
    let params = match &cli.params {
        Some(p) => ModelParams::from_json(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => ModelParams::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx {
        params,
        params_path: cli.params.clone(),
        out,
        registry: Registry::builtin(),
    };
    let started = Instant::now();
    let (name, seed) = match &cli.command {
        Command::Simulate {
            model,
            light,
            schedule,
            days,
        } => {
            simulate(&ctx, model, light.as_deref(), schedule.as_deref(), *days)?;
            ("simulate", None)
        }
        Command::Entrain { model, light } => {
            entrain(&ctx, model, light.as_deref())?;
            ("entrain", None)
        }
        Command::Optimize { scenario, init } => {
            optimize(&ctx, scenario, init)?;
            ("optimize", None)
        }
        Command::Validate {
            dataset,
            label,
            model,
        } => {
            validate(&ctx, dataset, *label, model)?;
            ("validate", None)
        }
        Command::Study {
            kind,
            seed,
            n,
            scenario,
            max_days,
        } => {
            study(&ctx, *kind, *seed, *n, scenario.as_deref(), *max_days)?;
            ("study", Some(*seed))
        }
        Command::Branches {
            d_min,
            d_max,
            step,
            refit,
        } => {
            branches(&ctx, *d_min, *d_max, *step, *refit)?;
            ("branches", None)
        }
    };
    let manifest = RunManifest {
        command: name,
        config_path: ctx.params_path.as_ref().map(|p| p.display().to_string()),
        seed,
        output_dir: ctx.out.display().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    ctx.write_json("manifest.json", &manifest)?;
    Ok((name, seed))
}

/// 2 for bad input, 3 for numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<alertopt::Error>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {}", anyhow!(e));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
