//! Light and sleep schedule optimization for the hybrid model.
//!
//! Decision variables are a piecewise-constant light signal and the times of
//! the sleep/wake switches. Each iteration integrates the model forward,
//! integrates the costate backward from a zero terminal value, and takes a
//! projected gradient step with backtracking.

mod adjoint;
pub mod dynamics;
mod guess;
mod objective;
mod projection;
mod studies;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::light::{LightSignal, ROOM_LIGHT_LUX};
use crate::params::ModelParams;
use crate::simulator::schedule::validate_intervals;
use crate::registry::Registry;
use crate::simulator::{Interval, PeriodicSolution, Switch, SwitchKind, Trajectory};

pub use adjoint::{evaluate, CostateTrajectory, Evaluation};
pub use guess::{initial_guess, reference_solution, start_state, ReferenceStart};
pub use objective::{Cumulative, Objective, ShiftWork};
pub use projection::{audit, project, ComfortBounds, ProjectionOutcome};
pub use studies::{
    alertness_integral, cns_compare, cns_schedule, phase_delay_h, preparation_sweep, randomized_shift_study,
    sample_shift_scenario, CnsComparison, PreparationPoint, ShiftStudyRow, ShiftStudySummary,
};

/// Hyperparameters of the descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Light step size (lux per unit gradient).
    #[serde(rename = "eta_I")]
    pub eta_i: f64,
    /// Switch-time step size (h per unit gradient).
    pub eta_t: f64,
    pub max_iters: usize,
    /// Stop after five consecutive iterations with relative change below this.
    pub obj_rel_tol: f64,
    /// Light floor used when evaluating the light gradient (lux).
    pub grad_regularization_eps: f64,
    pub max_halvings: usize,
    /// Width of a light bin (h).
    pub light_step_h: f64,
    /// Integration step (h).
    pub step_h: f64,
    /// Shortest sleep or wake episode between free switches (h).
    pub min_duration_h: f64,
    /// Half-width of the window searched when projecting a switch time (h).
    pub projection_window_h: f64,
    /// Let switches resting on a comfort bound follow it when the light
    /// changes, and fold that into the light gradient.
    pub follow_active_bounds: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta_i: 20000.0,
            eta_t: 0.05,
            max_iters: 400,
            obj_rel_tol: 1e-6,
            grad_regularization_eps: 1e-3,
            max_halvings: 10,
            light_step_h: 0.1,
            step_h: 0.01,
            min_duration_h: 0.25,
            projection_window_h: 2.0,
            follow_active_bounds: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta_I", self.eta_i),
            ("eta_t", self.eta_t),
            ("grad_regularization_eps", self.grad_regularization_eps),
            ("light_step_h", self.light_step_h),
            ("step_h", self.step_h),
            ("projection_window_h", self.projection_window_h),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.obj_rel_tol >= 0.0) || !(self.min_duration_h >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

fn default_light_max() -> f64 {
    ROOM_LIGHT_LUX
}

fn yes() -> bool {
    true
}

/// One optimization problem: horizon, work, objective and settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub t0_h: f64,
    pub tf_h: f64,
    /// Registered objective name, `shift_work` or `cumulative`.
    pub objective: String,
    #[serde(default)]
    pub work_intervals: Vec<Interval>,
    #[serde(default = "default_light_max")]
    pub light_max_lux: f64,
    /// Whole days by which the start is moved earlier.
    #[serde(default)]
    pub preparation_days: u32,
    /// Keep sleep episodes that are cut short by the start of work.
    #[serde(default = "yes")]
    pub naps: bool,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl Scenario {
    pub fn new(t0_h: f64, tf_h: f64, objective: &str, work_intervals: Vec<Interval>) -> Self {
        Self {
            name: None,
            t0_h,
            tf_h,
            objective: objective.to_string(),
            work_intervals,
            light_max_lux: ROOM_LIGHT_LUX,
            preparation_days: 0,
            naps: true,
            optimizer: OptimizerConfig::default(),
        }
    }

    /// Start of the horizon after preparation days.
    pub fn start_h(&self) -> f64 {
        self.t0_h - 24.0 * f64::from(self.preparation_days)
    }

    pub fn work_hours(&self) -> f64 {
        self.work_intervals.iter().map(Interval::length).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let (t0, tf) = (self.start_h(), self.tf_h);
        if !(t0.is_finite() && tf.is_finite() && tf > t0) {
            return Err(Error::Config(format!("empty horizon [{t0}, {tf}]")));
        }
        validate_intervals(&self.work_intervals, "work")?;
        for iv in &self.work_intervals {
            if iv.start < t0 || iv.end > tf {
                return Err(Error::Config(format!(
                    "work [{}, {}] leaves the horizon [{t0}, {tf}]",
                    iv.start, iv.end
                )));
            }
        }
        if !(self.light_max_lux > 0.0) {
            return Err(Error::Config("light_max_lux must be positive".into()));
        }
        Registry::builtin().objective(&self.objective)?;
        self.optimizer.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A scenario shipped with the crate, by name.
    pub fn bundled(name: &str) -> Result<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text))
            .unwrap_or_else(|| {
                Err(Error::Config(format!(
                    "no bundled scenario {name:?}; expected one of {:?}",
                    bundled_names()
                )))
            })
    }
}

const BUNDLED: [(&str, &str); 4] = [
    ("night_shifts_naps", include_str!("../../scenarios/night_shifts_naps.json")),
    ("night_shifts_no_naps", include_str!("../../scenarios/night_shifts_no_naps.json")),
    ("cumulative_three_shifts", include_str!("../../scenarios/cumulative_three_shifts.json")),
    ("cumulative_periodic", include_str!("../../scenarios/cumulative_periodic.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

/// A sleep/wake switch as a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionSwitch {
    pub t: f64,
    pub kind: SwitchKind,
    /// Fixed to a work boundary and excluded from the descent.
    #[serde(default)]
    pub pinned: bool,
}

/// Light bins and switch times over a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVariables {
    pub light: LightSignal,
    pub initial_asleep: bool,
    pub switches: Vec<DecisionSwitch>,
}

impl DecisionVariables {
    pub fn schedule_switches(&self) -> Vec<Switch> {
        self.switches
            .iter()
            .map(|s| Switch { t: s.t, kind: s.kind })
            .collect()
    }

    /// Number of constant-mode stretches.
    pub fn mode_count(&self) -> usize {
        self.switches.len() + 1
    }

    /// Sleep episodes `[onset, wake)`, open episodes closed at `tf`.
    pub fn sleep_episodes(&self, tf: f64) -> Vec<Interval> {
        let mut out = Vec::new();
        let mut since = self.initial_asleep.then_some(f64::NEG_INFINITY);
        for s in &self.switches {
            match s.kind {
                SwitchKind::SleepOnset => since = Some(s.t),
                SwitchKind::Wake => {
                    if let Some(a) = since.take() {
                        out.push(Interval::new(a, s.t));
                    }
                }
            }
        }
        if let Some(a) = since {
            out.push(Interval::new(a, tf));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub grad_i_norm: f64,
    pub grad_t_norm: f64,
    pub halvings: usize,
    /// Switches whose projection found no feasible time and were reverted.
    pub reverted: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub variables: DecisionVariables,
    pub trajectory: Trajectory,
    pub initial_j: f64,
    pub j: f64,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

impl OptimizationResult {
    /// Alertness integral, `-J`.
    pub fn alertness(&self) -> f64 {
        -self.j
    }

    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iter", "J", "grad_I_norm", "grad_t_norm", "halvings"])?;
        for r in &self.log {
            w.write_record([
                r.iter.to_string(),
                format!("{}", r.j),
                format!("{}", r.grad_i_norm),
                format!("{}", r.grad_t_norm),
                r.halvings.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Average alertness over the work of a 24-hour shift block, `-J / 24`.
pub fn average_alertness(j_work: f64) -> f64 {
    -j_work / 24.0
}

/// Everything fixed during one descent.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub params: &'a ModelParams,
    pub objective: &'a dyn Objective,
    pub work: &'a [Interval],
    pub t0: f64,
    pub tf: f64,
    /// State `(x, x_c, n, H)` at `t0`.
    pub x0: [f64; 4],
    pub light_max: f64,
    pub cfg: OptimizerConfig,
}

impl<'a> Problem<'a> {
    pub fn new(
        params: &'a ModelParams,
        scenario: &'a Scenario,
        objective: &'a dyn Objective,
        x0: [f64; 4],
    ) -> Self {
        Self {
            params,
            objective,
            work: &scenario.work_intervals,
            t0: scenario.start_h(),
            tf: scenario.tf_h,
            x0,
            light_max: scenario.light_max_lux,
            cfg: scenario.optimizer,
        }
    }
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |acc, g| acc + g * g).sqrt()
}

/// Projected gradient descent from `init`.
///
/// A step is accepted only if it does not increase `J` and the projected
/// schedule passes the comfort audit; otherwise the step is halved. The
/// returned variables are the best accepted iterate.
pub fn optimize(problem: &Problem<'_>, init: &DecisionVariables) -> Result<OptimizationResult> {
    let cfg = &problem.cfg;
    cfg.validate()?;
    let mut vars = init.clone();
    let mut eval = evaluate(problem, &vars)?;
    let initial_j = eval.j;
    let mut log = vec![IterationRecord {
        iter: 0,
        j: eval.j,
        grad_i_norm: l2(eval.grad_light.iter().copied()),
        grad_t_norm: l2(free_grads(&vars, &eval)),
        halvings: 0,
        reverted: 0,
        accepted: true,
    }];
    let mut quiet = 0;
    let mut converged = false;
    for iter in 1..=cfg.max_iters {
        let mut scale = 1.0;
        let mut accepted = None;
        let mut reverted = 0;
        let mut halvings = 0;
        for h in 0..=cfg.max_halvings {
            halvings = h;
            let out = project(problem, &vars, &eval, cfg.eta_i * scale, cfg.eta_t * scale)?;
            reverted = out.reverted;
            match evaluate(problem, &out.variables) {
                Ok(next) if next.j <= eval.j && audit(problem, &out.variables, &next).is_empty() => {
                    accepted = Some((out.variables, next));
                    break;
                }
                Ok(_) => {}
                Err(e) if e.is_numerical() => log::debug!("trial step failed: {e}"),
                Err(e) => return Err(e),
            }
            scale *= 0.5;
        }
        let Some((next_vars, next_eval)) = accepted else {
            log.push(IterationRecord {
                iter,
                j: eval.j,
                grad_i_norm: l2(eval.grad_light.iter().copied()),
                grad_t_norm: l2(free_grads(&vars, &eval)),
                halvings,
                reverted,
                accepted: false,
            });
            converged = true;
            break;
        };
        let change = (eval.j - next_eval.j).abs() / eval.j.abs().max(1e-12);
        vars = next_vars;
        eval = next_eval;
        log.push(IterationRecord {
            iter,
            j: eval.j,
            grad_i_norm: l2(eval.grad_light.iter().copied()),
            grad_t_norm: l2(free_grads(&vars, &eval)),
            halvings,
            reverted,
            accepted: true,
        });
        log::debug!("iter {iter}: J = {:.6}, halvings {halvings}", eval.j);
        quiet = if change < cfg.obj_rel_tol { quiet + 1 } else { 0 };
        if quiet >= 5 {
            converged = true;
            break;
        }
    }
    Ok(OptimizationResult {
        trajectory: eval.trajectory(problem, &vars),
        variables: vars,
        initial_j,
        j: eval.j,
        log,
        converged,
    })
}

fn free_grads<'a>(vars: &'a DecisionVariables, eval: &'a Evaluation) -> impl Iterator<Item = f64> + 'a {
    vars.switches
        .iter()
        .zip(&eval.grad_switch)
        .zip(&eval.active)
        .filter(|((s, _), a)| !s.pinned && !**a)
        .map(|(s, _)| s)
        .map(|(_, g)| *g)
}

/// Initial guess and optimized result for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub start: ReferenceStart,
    pub init: DecisionVariables,
    pub result: OptimizationResult,
}

/// Entrained start, initial guess and descent for `scenario`.
pub fn optimize_scenario(
    params: &ModelParams,
    scenario: &Scenario,
    reference: &PeriodicSolution,
) -> Result<ScenarioRun> {
    optimize_scenario_from(params, scenario, reference, None)
}

/// As [`optimize_scenario`], starting from `init` when given. A supplied
/// start must pass the constraint audit.
pub fn optimize_scenario_from(
    params: &ModelParams,
    scenario: &Scenario,
    reference: &PeriodicSolution,
    init: Option<DecisionVariables>,
) -> Result<ScenarioRun> {
    scenario.validate()?;
    let objective = Registry::builtin().objective(&scenario.objective)?;
    let start = start_state(params, reference, scenario.start_h(), scenario.optimizer.step_h)?;
    let problem = Problem::new(params, scenario, objective.as_ref(), start.x);
    let init = match init {
        Some(v) => {
            let expected = ((scenario.tf_h - scenario.start_h()) / scenario.optimizer.light_step_h)
                .round() as usize;
            if v.light.values_lux.len() != expected
                || (v.light.start_h - scenario.start_h()).abs() > 1e-9
            {
                return Err(Error::Config(format!(
                    "initial light must have {expected} bins from t = {} h",
                    scenario.start_h()
                )));
            }
            let eval = evaluate(&problem, &v)?;
            let problems = audit(&problem, &v, &eval);
            if !problems.is_empty() {
                return Err(Error::Constraints(problems));
            }
            v
        }
        None => initial_guess(params, scenario, &start)?,
    };
    let result = optimize(&problem, &init)?;
    Ok(ScenarioRun { start, init, result })
}
