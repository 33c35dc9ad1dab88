//! Time integration of the three models with event-detected switching.

mod engine;
pub(crate) mod models;
pub mod schedule;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bifurcation::{vv_at_equilibrium, FastSubsystem};
use crate::error::{Error, Result};
use crate::light::LightSignal;
use crate::model::{
    circadian_drive, q_sigmoid, sleep_drive, CircadianState, FullPrState, HybridState, SleepMode,
    ThreeProcessState,
};
use crate::params::ModelParams;

pub(crate) use engine::{run, Node, RunOutput, RunRequest, SwitchedModel};
pub(crate) use models::Hybrid as HybridModel;
use models::{FullPr, Hybrid, SleepUntilRested, ThreeProcess};
pub use schedule::{Interval, ScheduleKind, SleepScheduleSpec, Switch, SwitchKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step, or the initial step of the adaptive method (h).
    pub step: f64,
    pub event_tol: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest step the adaptive method may take (h).
    pub max_step: f64,
}

impl IntegratorConfig {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            step,
            event_tol: 1e-4,
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_step: step,
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive,
            step: 1e-3,
            event_tol: 1e-4,
            abs_tol,
            rel_tol,
            max_step: 0.05,
        }
    }

    /// Defaults for a model: RK4 at 0.01 h, adaptive for the stiff full model.
    /// Events are located well below the periodic-orbit tolerance.
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::FullPr => Self::adaptive(1e-6, 1e-8),
            _ => Self::rk4(0.01).with_event_tol(1e-9),
        }
    }

    pub fn with_event_tol(mut self, tol: f64) -> Self {
        self.event_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.step > 0.0
            && self.step.is_finite()
            && self.event_tol > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol > 0.0
            && self.max_step > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid integrator settings {self:?}")));
        }
        if self.method == Method::Rk4Fixed && self.event_tol > self.step {
            return Err(Error::Config(format!(
                "event_tol {} exceeds step {}",
                self.event_tol, self.step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FellAsleep,
    Woke,
    ShiftStart,
    ShiftEnd,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::FellAsleep => "fell_asleep",
            EventKind::Woke => "woke",
            EventKind::ShiftStart => "shift_start",
            EventKind::ShiftEnd => "shift_end",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "t_h")]
    pub t: f64,
    pub kind: EventKind,
}

/// One recorded point. Channels a model does not have are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "t_h")]
    pub t: f64,
    pub x: f64,
    pub xc: f64,
    pub n: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(skip)]
    pub w: f64,
    #[serde(rename = "Vm")]
    pub vm: f64,
    #[serde(skip)]
    pub vv: f64,
    #[serde(rename = "Dv")]
    pub dv: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "Hplus")]
    pub h_plus: f64,
    #[serde(rename = "Hminus")]
    pub h_minus: f64,
    pub beta: f64,
    #[serde(rename = "I_lux")]
    pub lux: f64,
    #[serde(rename = "A")]
    pub alertness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "tp")]
    ThreeProcess,
    #[serde(rename = "pr-full")]
    FullPr,
    #[serde(rename = "pr-hybrid")]
    Hybrid,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::ThreeProcess, ModelKind::FullPr, ModelKind::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ThreeProcess => "tp",
            ModelKind::FullPr => "pr-full",
            ModelKind::Hybrid => "pr-hybrid",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}' (tp, pr-full, pr-hybrid)")))
    }
}

/// Continuous state of any of the three models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelState {
    ThreeProcess(ThreeProcessState),
    FullPr(FullPrState),
    Hybrid(HybridState),
}

impl ModelState {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelState::ThreeProcess(_) => ModelKind::ThreeProcess,
            ModelState::FullPr(_) => ModelKind::FullPr,
            ModelState::Hybrid(_) => ModelKind::Hybrid,
        }
    }

    pub fn circadian(&self) -> CircadianState {
        match self {
            ModelState::ThreeProcess(s) => s.circadian,
            ModelState::FullPr(s) => s.circadian,
            ModelState::Hybrid(s) => s.circadian,
        }
    }

    pub fn homeostat(&self) -> f64 {
        match self {
            ModelState::ThreeProcess(s) => s.h,
            ModelState::FullPr(s) => s.h,
            ModelState::Hybrid(s) => s.h,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let c = self.circadian();
        let mut v = vec![c.x, c.xc, c.n];
        match self {
            ModelState::ThreeProcess(s) => v.extend([s.h, s.w]),
            ModelState::FullPr(s) => v.extend([s.vm, s.vv, s.h]),
            ModelState::Hybrid(s) => v.push(s.h),
        }
        v
    }
}

fn circ(x: &[f64]) -> CircadianState {
    CircadianState {
        x: x[0],
        xc: x[1],
        n: x[2],
    }
}

pub(crate) fn hybrid_array(s: &HybridState) -> [f64; 4] {
    [s.circadian.x, s.circadian.xc, s.circadian.n, s.h]
}

pub(crate) fn hybrid_state(x: &[f64; 4]) -> HybridState {
    HybridState {
        circadian: circ(x),
        h: x[3],
    }
}

fn full_array(s: &FullPrState) -> [f64; 6] {
    [s.circadian.x, s.circadian.xc, s.circadian.n, s.vm, s.vv, s.h]
}

fn full_state(x: &[f64; 6]) -> FullPrState {
    FullPrState {
        circadian: circ(x),
        vm: x[3],
        vv: x[4],
        h: x[5],
    }
}

fn tp_array(s: &ThreeProcessState) -> [f64; 5] {
    [s.circadian.x, s.circadian.xc, s.circadian.n, s.h, s.w]
}

fn tp_state(x: &[f64; 5]) -> ThreeProcessState {
    ThreeProcessState {
        circadian: circ(x),
        h: x[3],
        w: x[4],
    }
}

/// Recorded simulation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: ModelKind,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub final_time: f64,
    pub final_state: ModelState,
    pub final_asleep: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().filter(move |e| e.kind == kind).map(|e| e.t)
    }

    /// Sleep episodes `[onset, wake)`, clipped to the recorded span.
    pub fn sleep_episodes(&self) -> Vec<Interval> {
        let mut out = Vec::new();
        let Some(first) = self.samples.first() else {
            return out;
        };
        let mut since = (first.beta == 1.0).then_some(first.t);
        for e in &self.events {
            match e.kind {
                EventKind::FellAsleep => since = Some(e.t),
                EventKind::Woke => {
                    if let Some(s) = since.take() {
                        out.push(Interval::new(s, e.t));
                    }
                }
                _ => {}
            }
        }
        if let Some(s) = since {
            out.push(Interval::new(s, self.final_time));
        }
        out
    }

    /// Linear interpolation of a channel at time `t` (right-continuous at events).
    pub fn interpolate(&self, t: f64, channel: impl Fn(&Sample) -> f64) -> Option<f64> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t - 1e-9 || t > s[s.len() - 1].t + 1e-9 {
            return None;
        }
        let k = s.partition_point(|p| p.t <= t);
        if k == 0 {
            return Some(channel(&s[0]));
        }
        if k == s.len() {
            return Some(channel(&s[k - 1]));
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let span = b.t - a.t;
        if span <= 0.0 {
            return Some(channel(b));
        }
        let w = (t - a.t) / span;
        Some((1.0 - w) * channel(a) + w * channel(b))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        if self.samples.is_empty() {
            w.write_record([
                "t_h", "x", "xc", "n", "H", "Vm", "Dv", "C", "Hplus", "Hminus", "beta", "I_lux",
                "A",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_events_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t_h", "kind"])?;
        for e in &self.events {
            w.write_record([format!("{}", e.t), e.kind.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Where and how a simulation runs.
#[derive(Debug, Clone, Copy)]
pub struct SimulationSpan<'a> {
    pub t0: f64,
    pub t1: f64,
    pub light: &'a LightSignal,
    pub schedule: &'a SleepScheduleSpec,
    pub cfg: &'a IntegratorConfig,
}

fn to_trajectory<const N: usize>(
    kind: ModelKind,
    out: RunOutput<N>,
    t1: f64,
    light: &LightSignal,
    sample: impl Fn(f64, &[f64; N], f64, SleepMode) -> Sample,
    state: impl Fn(&[f64; N]) -> ModelState,
) -> Trajectory {
    let samples = out
        .nodes
        .iter()
        .map(|n| sample(n.t, &n.x, light.at(n.t), n.mode))
        .collect();
    Trajectory {
        model: kind,
        samples,
        events: out.events,
        final_time: t1,
        final_state: state(&out.final_x),
        final_asleep: out.final_mode.is_asleep(),
    }
}

/// Integrates the hybrid model, recording every step.
pub fn integrate_hybrid(
    params: &ModelParams,
    initial: &HybridState,
    asleep: bool,
    span: &SimulationSpan<'_>,
) -> Result<Trajectory> {
    let model = Hybrid { params };
    let out = run(&model, &request(span, hybrid_array(initial), asleep, Some(span.t0)))?;
    Ok(hybrid_trajectory(params, out, span.t1, span.light))
}

/// Converts a raw hybrid run into a recorded trajectory.
pub(crate) fn hybrid_trajectory(
    params: &ModelParams,
    out: RunOutput<4>,
    t1: f64,
    light: &LightSignal,
) -> Trajectory {
    let model = Hybrid { params };
    to_trajectory(
        ModelKind::Hybrid,
        out,
        t1,
        light,
        |t, x, l, m| model.sample(t, x, l, m),
        |x| ModelState::Hybrid(hybrid_state(x)),
    )
}

/// Integrates the full neuronal model, recording every accepted step.
pub fn integrate_full_pr(
    params: &ModelParams,
    initial: &FullPrState,
    asleep: bool,
    span: &SimulationSpan<'_>,
) -> Result<Trajectory> {
    if span.schedule.kind == ScheduleKind::Tunable {
        return Err(Error::Config(
            "the full model switches on its own potentials; tunable schedules are not supported"
                .into(),
        ));
    }
    let model = FullPr { params };
    let out = run(&model, &request(span, full_array(initial), asleep, Some(span.t0)))?;
    Ok(to_trajectory(
        ModelKind::FullPr,
        out,
        span.t1,
        span.light,
        |t, x, l, m| model.sample(t, x, l, m),
        |x| ModelState::FullPr(full_state(x)),
    ))
}

/// Integrates the three-process model, recording every step.
pub fn integrate_three_process(
    params: &ModelParams,
    initial: &ThreeProcessState,
    asleep: bool,
    span: &SimulationSpan<'_>,
) -> Result<Trajectory> {
    let model = ThreeProcess { params };
    let out = run(&model, &request(span, tp_array(initial), asleep, Some(span.t0)))?;
    Ok(to_trajectory(
        ModelKind::ThreeProcess,
        out,
        span.t1,
        span.light,
        |t, x, l, m| model.sample(t, x, l, m),
        |x| ModelState::ThreeProcess(tp_state(x)),
    ))
}

/// Integrates whichever model `initial` belongs to.
pub fn simulate(
    params: &ModelParams,
    initial: &ModelState,
    asleep: bool,
    span: &SimulationSpan<'_>,
) -> Result<Trajectory> {
    match initial {
        ModelState::ThreeProcess(s) => integrate_three_process(params, s, asleep, span),
        ModelState::FullPr(s) => integrate_full_pr(params, s, asleep, span),
        ModelState::Hybrid(s) => integrate_hybrid(params, s, asleep, span),
    }
}

fn request<'a, const N: usize>(
    span: &'a SimulationSpan<'a>,
    x0: [f64; N],
    asleep0: bool,
    record_from: Option<f64>,
) -> RunRequest<'a, N> {
    RunRequest {
        t0: span.t0,
        t1: span.t1,
        x0,
        asleep0,
        light: span.light,
        schedule: span.schedule,
        cfg: span.cfg,
        record_from,
        extra_stops: &[],
    }
}

/// Homeostat value at which the awake hybrid model is stationary with `x = x_c = 0`.
fn awake_fixed_point_h(params: &ModelParams, x: f64, xc: f64) -> f64 {
    let np = &params.neuronal;
    let c = circadian_drive(x, xc, np);
    let f = |h: f64| np.mu_h * q_sigmoid(params.branches.v2(sleep_drive(c, h, np)), np) - h;
    // f > 0 at h = 0 and f < 0 once h exceeds mu_H Q_max.
    let (mut lo, mut hi) = (0.0, np.mu_h * np.q_max + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fast potentials at the equilibrium of the requested branch for the given slow state.
pub fn full_pr_from_slow(
    params: &ModelParams,
    circadian: CircadianState,
    h: f64,
    asleep: bool,
) -> Result<FullPrState> {
    let np = &params.neuronal;
    let fast = FastSubsystem::new(np)?;
    let d = sleep_drive(circadian_drive(circadian.x, circadian.xc, np), h, np);
    let set = fast.equilibria(d);
    let vm = if asleep {
        set.roots.first()
    } else {
        set.roots.last()
    }
    .map(|r| r.vm)
    .ok_or_else(|| Error::Domain(format!("no equilibrium at D_v = {d}")))?;
    Ok(FullPrState {
        circadian,
        vm,
        vv: vv_at_equilibrium(vm, d, np),
        h,
    })
}

/// Fixed starting point for entrainment: 6 AM, awake.
pub fn nominal_state(kind: ModelKind, params: &ModelParams) -> Result<ModelState> {
    let circadian = CircadianState {
        x: 1.0,
        xc: 0.0,
        n: 0.5,
    };
    let h = awake_fixed_point_h(params, circadian.x, circadian.xc);
    Ok(match kind {
        ModelKind::Hybrid => ModelState::Hybrid(HybridState { circadian, h }),
        ModelKind::FullPr => ModelState::FullPr(full_pr_from_slow(params, circadian, h, false)?),
        ModelKind::ThreeProcess => ModelState::ThreeProcess(ThreeProcessState {
            circadian,
            h: 0.5,
            w: 0.0,
        }),
    })
}

/// Settings of the periodic-orbit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOptions {
    pub max_iterations: usize,
    pub tol: f64,
    /// Use Newton steps on the return map after this many plain iterations.
    pub newton_after: Option<usize>,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            tol: 1e-6,
            newton_after: Some(3),
        }
    }
}

/// An entrained orbit: one recorded period and the state that starts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSolution {
    pub trajectory: Trajectory,
    pub start_state: ModelState,
    pub start_asleep: bool,
    pub period: f64,
    pub iterations: usize,
    /// Normalized return-map mismatch per iteration.
    pub mismatch_history: Vec<f64>,
}

impl PeriodicSolution {
    pub fn wake_time(&self) -> Option<f64> {
        self.trajectory.events_of(EventKind::Woke).next()
    }

    pub fn sleep_time(&self) -> Option<f64> {
        self.trajectory.events_of(EventKind::FellAsleep).next()
    }
}

fn mismatch<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn solve_periodic<const N: usize, M: SwitchedModel<N>>(
    model: &M,
    x_start: [f64; N],
    light: &LightSignal,
    cfg: &IntegratorConfig,
    opts: &PeriodicOptions,
) -> Result<([f64; N], bool, usize, Vec<f64>)> {
    let period = light
        .period_h
        .ok_or_else(|| Error::Config("entrainment needs a periodic light signal".into()))?;
    let days = (24.0 / period).round();
    if !(days >= 1.0) || (days * period - 24.0).abs() > 1e-9 {
        return Err(Error::Config(format!("light period {period} h does not divide 24 h")));
    }
    let schedule = SleepScheduleSpec::spontaneous();
    let map = |x: &[f64; N], asleep: bool| -> Result<([f64; N], bool)> {
        let out = run(
            model,
            &RunRequest {
                t0: 0.0,
                t1: 24.0,
                x0: *x,
                asleep0: asleep,
                light,
                schedule: &schedule,
                cfg,
                record_from: None,
                extra_stops: &[],
            },
        )?;
        Ok((out.final_x, out.final_mode.is_asleep()))
    };
    let mut x = x_start;
    let mut asleep = false;
    let mut history = Vec::new();
    for it in 1..=opts.max_iterations {
        let (y, asleep_y) = map(&x, asleep)?;
        let err = mismatch(&x, &y);
        history.push(err);
        if err < opts.tol && asleep_y == asleep {
            return Ok((x, asleep, it, history));
        }
        let try_newton = opts.newton_after.is_some_and(|k| it > k) && asleep_y == asleep;
        if try_newton {
            if let Some(z) = newton_step(&map, &x, &y, asleep)? {
                let (yz, asleep_z) = map(&z, asleep)?;
                if asleep_z == asleep && mismatch(&z, &yz) < err {
                    x = z;
                    continue;
                }
            }
        }
        x = y;
        asleep = asleep_y;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        mismatch: history.last().copied().unwrap_or(f64::NAN),
    })
}

fn newton_step<const N: usize>(
    map: &impl Fn(&[f64; N], bool) -> Result<([f64; N], bool)>,
    x: &[f64; N],
    y: &[f64; N],
    asleep: bool,
) -> Result<Option<[f64; N]>> {
    let mut jac = DMatrix::<f64>::zeros(N, N);
    for j in 0..N {
        let delta = 1e-5 * x[j].abs().max(1.0);
        let mut xp = *x;
        xp[j] += delta;
        let (yp, ap) = map(&xp, asleep)?;
        if ap != asleep {
            return Ok(None);
        }
        for i in 0..N {
            jac[(i, j)] = (yp[i] - y[i]) / delta;
        }
        jac[(j, j)] -= 1.0;
    }
    let rhs = DVector::from_iterator(N, (0..N).map(|i| x[i] - y[i]));
    let Some(step) = jac.lu().solve(&rhs) else {
        return Ok(None);
    };
    let mut z = *x;
    for i in 0..N {
        z[i] += step[i];
    }
    Ok(z.iter().all(|v| v.is_finite()).then_some(z))
}

/// Entrains a model to 24 h-periodic light and returns one period from t = 0 (6 AM).
pub fn find_periodic_solution(
    kind: ModelKind,
    params: &ModelParams,
    light: &LightSignal,
    cfg: &IntegratorConfig,
    opts: &PeriodicOptions,
) -> Result<PeriodicSolution> {
    find_periodic_solution_from(&nominal_state(kind, params)?, params, light, cfg, opts)
}

/// As [`find_periodic_solution`], starting from a given state at 6 AM (awake).
pub fn find_periodic_solution_from(
    start: &ModelState,
    params: &ModelParams,
    light: &LightSignal,
    cfg: &IntegratorConfig,
    opts: &PeriodicOptions,
) -> Result<PeriodicSolution> {
    let (state, asleep, iterations, history) = match start {
        ModelState::Hybrid(s) => {
            let (x, a, it, h) = solve_periodic(&Hybrid { params }, hybrid_array(s), light, cfg, opts)?;
            (ModelState::Hybrid(hybrid_state(&x)), a, it, h)
        }
        ModelState::FullPr(s) => {
            let (x, a, it, h) = solve_periodic(&FullPr { params }, full_array(s), light, cfg, opts)?;
            (ModelState::FullPr(full_state(&x)), a, it, h)
        }
        ModelState::ThreeProcess(s) => {
            let (x, a, it, h) =
                solve_periodic(&ThreeProcess { params }, tp_array(s), light, cfg, opts)?;
            (ModelState::ThreeProcess(tp_state(&x)), a, it, h)
        }
    };
    let schedule = SleepScheduleSpec::spontaneous();
    let span = SimulationSpan {
        t0: 0.0,
        t1: 24.0,
        light,
        schedule: &schedule,
        cfg,
    };
    let trajectory = simulate(params, &state, asleep, &span)?;
    Ok(PeriodicSolution {
        trajectory,
        start_state: state,
        start_asleep: asleep,
        period: 24.0,
        iterations,
        mismatch_history: history,
    })
}

/// Time (h) the hybrid model must sleep from `onset` until `H` falls below the
/// sleep threshold.
pub fn compute_cns(
    params: &ModelParams,
    onset: &HybridState,
    t_onset: f64,
    light: &LightSignal,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let model = SleepUntilRested(Hybrid { params });
    let schedule = SleepScheduleSpec::spontaneous();
    let out = run(
        &model,
        &RunRequest {
            t0: t_onset,
            t1: t_onset + 24.0,
            x0: hybrid_array(onset),
            asleep0: true,
            light,
            schedule: &schedule,
            cfg,
            record_from: None,
            extra_stops: &[],
        },
    )?;
    out.events
        .iter()
        .find(|e| e.kind == EventKind::Woke)
        .map(|e| e.t - t_onset)
        .ok_or_else(|| Error::NonConvergence {
            iterations: 1,
            mismatch: f64::INFINITY,
        })
}

/// Awake time with `H` at or below the sleep threshold (h).
pub fn compute_nwti(traj: &Trajectory) -> f64 {
    let s = &traj.samples;
    let f = |p: &Sample| {
        if p.beta == 0.0 && p.h <= p.h_plus {
            1.0
        } else {
            0.0
        }
    };
    s.windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1])))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("nope".parse::<ModelKind>().is_err());
    }

    #[test]
    fn config_validation() {
        IntegratorConfig::rk4(0.01).validate().unwrap();
        assert!(IntegratorConfig::rk4(0.0).validate().is_err());
        assert!(IntegratorConfig::rk4(0.01).with_event_tol(0.1).validate().is_err());
        IntegratorConfig::adaptive(1e-6, 1e-8).validate().unwrap();
    }

    #[test]
    fn awake_fixed_point_is_stationary() {
        let p = ModelParams::default();
        let h = awake_fixed_point_h(&p, 1.0, 0.0);
        let np = &p.neuronal;
        let c = circadian_drive(1.0, 0.0, np);
        let vm = p.branches.v2(sleep_drive(c, h, np));
        assert!((np.mu_h * q_sigmoid(vm, np) - h).abs() < 1e-9);
    }
}
