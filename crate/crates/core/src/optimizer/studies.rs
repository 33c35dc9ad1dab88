//! Batch experiments: preparation days, CNS comparison, random shift plans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::light::LightSignal;
use crate::model::circadian_phase;
use crate::params::ModelParams;
use crate::simulator::{
    compute_cns, compute_nwti, hybrid_state, integrate_hybrid, run, EventKind, HybridModel,
    Interval, PeriodicSolution, RunRequest, SimulationSpan, SleepScheduleSpec, Switch,
    SwitchKind, Trajectory,
};
use crate::simulator::IntegratorConfig;

use super::{average_alertness, optimize_scenario, OptimizerConfig, Scenario};

/// Average work-time alertness after optimizing with a given head start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparationPoint {
    pub days: u32,
    #[serde(rename = "J")]
    pub j: f64,
    pub a_avg: f64,
}

/// Runs the shift-work optimization once per entry of `days`, moving the
/// start earlier by that many days. Runs in parallel; results keep the
/// order of `days`.
pub fn preparation_sweep(
    params: &ModelParams,
    base: &Scenario,
    days: &[u32],
    reference: &PeriodicSolution,
) -> Result<Vec<PreparationPoint>> {
    days.par_iter()
        .map(|&d| {
            let mut s = base.clone();
            s.preparation_days = d;
            let run = optimize_scenario(params, &s, reference)?;
            Ok(PreparationPoint {
                days: d,
                j: run.result.j,
                a_avg: average_alertness(run.result.j),
            })
        })
        .collect()
}

fn sim_cfg(step_h: f64) -> IntegratorConfig {
    IntegratorConfig::rk4(step_h).with_event_tol(1e-10_f64.min(step_h))
}

/// Reference light with work outside the subject's control; sleep follows the
/// model's thresholds except after work, when the subject sleeps from the end
/// of work for exactly the circadian necessary sleep.
pub fn cns_schedule(
    params: &ModelParams,
    scenario: &Scenario,
    x0: [f64; 4],
    asleep0: bool,
) -> Result<Trajectory> {
    let (t0, tf) = (scenario.start_h(), scenario.tf_h);
    let cfg = sim_cfg(scenario.optimizer.step_h);
    let reference_light = LightSignal::reference_day(0.1)?;
    let light = LightSignal::sampled(t0, tf, scenario.optimizer.light_step_h, |t| {
        reference_light.at(t)
    })?;
    let work = &scenario.work_intervals;
    let model = HybridModel { params };
    let spontaneous = if work.is_empty() {
        SleepScheduleSpec::spontaneous()
    } else {
        SleepScheduleSpec::forced(work.clone())
    };

    let mut switches: Vec<Switch> = Vec::new();
    let (mut t, mut x, mut asleep) = (t0, x0, asleep0);
    while t < tf - 1e-9 {
        let out = run(
            &model,
            &RunRequest {
                t0: t,
                t1: tf,
                x0: x,
                asleep0: asleep,
                light: &light,
                schedule: &spontaneous,
                cfg: &cfg,
                record_from: None,
                extra_stops: &[],
            },
        )?;
        let mut post_work = None;
        for e in &out.events {
            let kind = match e.kind {
                EventKind::FellAsleep => SwitchKind::SleepOnset,
                EventKind::Woke => SwitchKind::Wake,
                _ => continue,
            };
            if e.t >= tf - 1e-9 {
                break;
            }
            switches.push(Switch { t: e.t, kind });
            if kind == SwitchKind::SleepOnset && work.iter().any(|w| (w.end - e.t).abs() < 1e-7) {
                post_work = Some(e.t);
                break;
            }
        }
        let Some(onset) = post_work else {
            break;
        };
        // State at the post-work onset, then the necessary sleep from there.
        let at_onset = run(
            &model,
            &RunRequest {
                t0: t,
                t1: onset,
                x0: x,
                asleep0: asleep,
                light: &light,
                schedule: &spontaneous,
                cfg: &cfg,
                record_from: None,
                extra_stops: &[],
            },
        )?
        .final_x;
        let needed = compute_cns(params, &hybrid_state(&at_onset), onset, &light, &cfg)?;
        let next_work = work
            .iter()
            .map(|w| w.start)
            .filter(|&s| s > onset)
            .fold(tf, f64::min);
        let wake = (onset + needed).min(next_work);
        if wake >= tf - 1e-9 {
            break;
        }
        let sleep = SleepScheduleSpec::tunable(Vec::new(), Vec::new());
        x = run(
            &model,
            &RunRequest {
                t0: onset,
                t1: wake,
                x0: at_onset,
                asleep0: true,
                light: &light,
                schedule: &sleep,
                cfg: &cfg,
                record_from: None,
                extra_stops: &[],
            },
        )?
        .final_x;
        if wake < next_work {
            switches.push(Switch::wake(wake));
        }
        t = wake;
        asleep = false;
    }
    let schedule = SleepScheduleSpec::tunable(switches, work.clone());
    let span = SimulationSpan {
        t0,
        t1: tf,
        light: &light,
        schedule: &schedule,
        cfg: &cfg,
    };
    integrate_hybrid(params, &hybrid_state(&x0), asleep0, &span)
}

/// Mean circadian phase lag (h) of the window starting at `later` behind the
/// window of the same length starting at `earlier`; positive means delayed.
pub fn phase_delay_h(traj: &Trajectory, earlier: f64, later: f64, span_h: f64) -> Result<f64> {
    let phase = |t: f64| -> Result<f64> {
        let x = traj.interpolate(t, |s| s.x);
        let xc = traj.interpolate(t, |s| s.xc);
        match (x, xc) {
            (Some(x), Some(xc)) => circadian_phase(x, xc),
            _ => Err(Error::Config(format!("t = {t} h lies outside the trajectory"))),
        }
    };
    let n = (span_h / 0.1).round().max(1.0) as usize;
    let mut acc = 0.0;
    for k in 0..n {
        let s = span_h * k as f64 / n as f64;
        let d = phase(earlier + s)? - phase(later + s)?;
        acc += (d + PI).rem_euclid(2.0 * PI) - PI;
    }
    Ok(acc / n as f64 * 24.0 / (2.0 * PI))
}

/// NWTI and alertness of the CNS schedule against the optimized schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnsComparison {
    pub nwti_cns_h: f64,
    pub nwti_optimized_h: f64,
    pub alertness_cns: f64,
    pub alertness_initial: f64,
    pub alertness_optimized: f64,
}

impl CnsComparison {
    pub fn nwti_change_pct(&self) -> f64 {
        100.0 * (self.nwti_optimized_h - self.nwti_cns_h) / self.nwti_cns_h
    }

    pub fn alertness_increase(&self) -> f64 {
        self.alertness_optimized - self.alertness_initial
    }
}

/// Alertness integral `∫ (1 - beta)(H+ - H) dt` of a recorded trajectory.
pub fn alertness_integral(traj: &Trajectory) -> f64 {
    traj.samples
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].alertness + w[1].alertness))
        .filter(|v| v.is_finite())
        .sum()
}

/// Optimizes `scenario` and compares it with the CNS schedule.
pub fn cns_compare(
    params: &ModelParams,
    scenario: &Scenario,
    reference: &PeriodicSolution,
) -> Result<(CnsComparison, super::ScenarioRun)> {
    let run = optimize_scenario(params, scenario, reference)?;
    let cns = cns_schedule(params, scenario, run.start.x, run.start.asleep)?;
    let cmp = CnsComparison {
        nwti_cns_h: compute_nwti(&cns),
        nwti_optimized_h: compute_nwti(&run.result.trajectory),
        alertness_cns: alertness_integral(&cns),
        alertness_initial: -run.result.initial_j,
        alertness_optimized: -run.result.j,
    };
    Ok((cmp, run))
}

/// Three consecutive shifts starting between 3 PM and 11 PM and lasting
/// 4 to 12 hours; horizon from noon on day 1 to midnight on day 5.
pub fn sample_shift_scenario(rng: &mut impl Rng, optimizer: OptimizerConfig) -> Scenario {
    let start = rng.gen_range(9.0..=17.0);
    let length = rng.gen_range(4.0..=12.0);
    let work = (0..3)
        .map(|d| Interval::new(start + 24.0 * d as f64, start + length + 24.0 * d as f64))
        .collect();
    let mut s = Scenario::new(6.0, 90.0, "cumulative", work);
    s.optimizer = optimizer;
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStudyRow {
    pub index: usize,
    pub shift_start_h: f64,
    pub shift_length_h: f64,
    pub alertness_initial: Option<f64>,
    pub alertness_optimized: Option<f64>,
    pub nwti_cns_h: Option<f64>,
    pub nwti_optimized_h: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStudySummary {
    pub seed: u64,
    pub n: usize,
    pub failures: usize,
    pub mean_alertness_increase: f64,
    pub nwti_improved: usize,
    pub nwti_change_pct_mean: f64,
    pub nwti_change_pct_std: f64,
    pub rows: Vec<ShiftStudyRow>,
}

/// Optimizes `n` random three-shift plans and compares each with its CNS
/// schedule. Scenarios are drawn up front from the seed, so the result does
/// not depend on scheduling across threads.
pub fn randomized_shift_study(
    params: &ModelParams,
    n: usize,
    seed: u64,
    optimizer: OptimizerConfig,
    reference: &PeriodicSolution,
) -> ShiftStudySummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenarios: Vec<Scenario> = (0..n).map(|_| sample_shift_scenario(&mut rng, optimizer)).collect();
    let rows: Vec<ShiftStudyRow> = scenarios
        .par_iter()
        .enumerate()
        .map(|(index, s)| {
            let w = s.work_intervals[0];
            let mut row = ShiftStudyRow {
                index,
                shift_start_h: w.start,
                shift_length_h: w.length(),
                alertness_initial: None,
                alertness_optimized: None,
                nwti_cns_h: None,
                nwti_optimized_h: None,
                error: None,
            };
            match cns_compare(params, s, reference) {
                Ok((c, _)) => {
                    row.alertness_initial = Some(c.alertness_initial);
                    row.alertness_optimized = Some(c.alertness_optimized);
                    row.nwti_cns_h = Some(c.nwti_cns_h);
                    row.nwti_optimized_h = Some(c.nwti_optimized_h);
                }
                Err(e) => {
                    log::warn!("scenario {index} failed: {e}");
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();

    let ok: Vec<&ShiftStudyRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let m = ok.len().max(1) as f64;
    let increase = ok
        .iter()
        .map(|r| r.alertness_optimized.unwrap() - r.alertness_initial.unwrap())
        .sum::<f64>()
        / m;
    let changes: Vec<f64> = ok
        .iter()
        .map(|r| {
            let (c, o) = (r.nwti_cns_h.unwrap(), r.nwti_optimized_h.unwrap());
            100.0 * (o - c) / c
        })
        .collect();
    let mean = changes.iter().sum::<f64>() / m;
    let var = if changes.len() > 1 {
        changes.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (changes.len() - 1) as f64
    } else {
        0.0
    };
    ShiftStudySummary {
        seed,
        n,
        failures: rows.len() - ok.len(),
        mean_alertness_increase: increase,
        nwti_improved: ok
            .iter()
            .filter(|r| r.nwti_optimized_h.unwrap() > r.nwti_cns_h.unwrap())
            .count(),
        nwti_change_pct_mean: mean,
        nwti_change_pct_std: var.sqrt(),
        rows,
    }
}
