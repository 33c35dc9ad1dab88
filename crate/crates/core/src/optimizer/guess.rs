//! Entrained reference and the initial schedule built from it.

use crate::error::{Error, Result};
use crate::light::LightSignal;
use crate::params::ModelParams;
use crate::simulator::{
    find_periodic_solution, hybrid_array, run, EventKind, HybridModel, IntegratorConfig, Interval,
    ModelKind, ModelState, PeriodicOptions, PeriodicSolution, RunRequest, SleepScheduleSpec,
    SwitchKind,
};

use super::{DecisionSwitch, DecisionVariables, Scenario};

const PIN_TOL: f64 = 1e-7;

fn reference_cfg(step_h: f64) -> IntegratorConfig {
    IntegratorConfig::rk4(step_h).with_event_tol(1e-10_f64.min(step_h))
}

/// Hybrid model entrained to the reference light day.
pub fn reference_solution(params: &ModelParams, step_h: f64) -> Result<PeriodicSolution> {
    let light = LightSignal::reference_day(0.1)?;
    find_periodic_solution(
        ModelKind::Hybrid,
        params,
        &light,
        &reference_cfg(step_h),
        &PeriodicOptions::default(),
    )
}

/// State of the entrained subject at some time of day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceStart {
    pub t: f64,
    pub x: [f64; 4],
    pub asleep: bool,
}

/// Follows the reference orbit from 6 AM to `t` (taken modulo 24 h).
pub fn start_state(
    params: &ModelParams,
    reference: &PeriodicSolution,
    t: f64,
    step_h: f64,
) -> Result<ReferenceStart> {
    let ModelState::Hybrid(s) = &reference.start_state else {
        return Err(Error::Config("the reference must be a hybrid-model orbit".into()));
    };
    let light = LightSignal::reference_day(0.1)?;
    let schedule = SleepScheduleSpec::spontaneous();
    let cfg = reference_cfg(step_h);
    let out = run(
        &HybridModel { params },
        &RunRequest {
            t0: 0.0,
            t1: t.rem_euclid(24.0),
            x0: hybrid_array(s),
            asleep0: reference.start_asleep,
            light: &light,
            schedule: &schedule,
            cfg: &cfg,
            record_from: None,
            extra_stops: &[],
        },
    )?;
    Ok(ReferenceStart {
        t,
        x: out.final_x,
        asleep: out.final_mode.is_asleep(),
    })
}

fn merge(mut v: Vec<Interval>) -> Vec<Interval> {
    v.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Schedule derived from the reference: reference light, no sleep during
/// work, and sleep switched by the model's own thresholds otherwise.
///
/// Sleep starts once `H` reaches `H+` outside work and ends at `H-` or when
/// work begins. Episodes shorter than the minimum duration are removed, as
/// are (without naps) episodes cut short by the start of work; the schedule
/// is re-simulated after each removal.
pub fn initial_guess(
    params: &ModelParams,
    scenario: &Scenario,
    start: &ReferenceStart,
) -> Result<DecisionVariables> {
    scenario.validate()?;
    let cfg = &scenario.optimizer;
    let (t0, tf) = (scenario.start_h(), scenario.tf_h);
    let reference_light = LightSignal::reference_day(0.1)?;
    let light = LightSignal::sampled(t0, tf, cfg.light_step_h, |t| reference_light.at(t))?;
    let work = &scenario.work_intervals;
    let sim_cfg = reference_cfg(cfg.step_h);
    let mut suppressed: Vec<Interval> = Vec::new();

    for _ in 0..200 {
        let forced = merge(work.iter().copied().chain(suppressed.iter().copied()).collect());
        let schedule = if forced.is_empty() {
            SleepScheduleSpec::spontaneous()
        } else {
            SleepScheduleSpec::forced(forced)
        };
        let out = run(
            &HybridModel { params },
            &RunRequest {
                t0,
                t1: tf,
                x0: start.x,
                asleep0: start.asleep,
                light: &light,
                schedule: &schedule,
                cfg: &sim_cfg,
                record_from: None,
                extra_stops: &[],
            },
        )?;
        let mut switches = Vec::new();
        for e in &out.events {
            let kind = match e.kind {
                EventKind::FellAsleep => SwitchKind::SleepOnset,
                EventKind::Woke => SwitchKind::Wake,
                _ => continue,
            };
            if e.t >= tf - 1e-9 {
                continue;
            }
            let pinned = match kind {
                SwitchKind::SleepOnset => work.iter().any(|w| (w.end - e.t).abs() < PIN_TOL),
                SwitchKind::Wake => work.iter().any(|w| (w.start - e.t).abs() < PIN_TOL),
            };
            switches.push(DecisionSwitch { t: e.t, kind, pinned });
        }
        // A sleep event right at the start of a forced interval ends at once.
        let mut k = 0;
        while k + 1 < switches.len() {
            if switches[k + 1].t - switches[k].t < 1e-9 {
                switches.drain(k..k + 2);
            } else {
                k += 1;
            }
        }
        let vars = DecisionVariables {
            light: light.clone(),
            initial_asleep: start.asleep,
            switches,
        };
        let unwanted = vars
            .sleep_episodes(tf)
            .into_iter()
            .filter(|ep| ep.start > t0)
            .find(|ep| {
                let cut_by_work = work.iter().any(|w| (w.start - ep.end).abs() < PIN_TOL);
                ep.length() < cfg.min_duration_h - 1e-9 || (!scenario.naps && cut_by_work)
            });
        match unwanted {
            Some(ep) => {
                log::debug!("initial guess drops sleep [{:.3}, {:.3}]", ep.start, ep.end);
                suppressed.push(ep);
            }
            None => return Ok(vars),
        }
    }
    Err(Error::NonConvergence {
        iterations: 200,
        mismatch: f64::NAN,
    })
}
