//! Projection of candidate updates onto the light box and the comfort
//! constraints on switch times.

use crate::error::Result;
use crate::model::{circadian_drive, thresholds};
use crate::params::ModelParams;
use crate::simulator::{run, HybridModel, Interval, Node, RunRequest, SleepScheduleSpec, SwitchKind};

use super::adjoint::integrator;
use super::dynamics::{piece, rhs_on, State};
use super::{DecisionVariables, Evaluation, Problem};

const AUDIT_TOL: f64 = 1e-6;

/// How far past its bound an active switch is aimed (h).
const ACTIVE_REACH_H: f64 = 0.25;

/// Admissible range of `H` at a switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComfortBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ComfortBounds {
    /// Sleep onset needs `H+ <= H <= H+_max`; waking needs `H- <= H <= H-_max`.
    pub fn at(params: &ModelParams, x: &State, kind: SwitchKind) -> Self {
        let np = &params.neuronal;
        let th = thresholds(circadian_drive(x[0], x[1], np), np);
        match kind {
            SwitchKind::SleepOnset => Self {
                lower: th.h_plus,
                upper: th.h_plus_max,
            },
            SwitchKind::Wake => Self {
                lower: th.h_minus,
                upper: th.h_minus_max,
            },
        }
    }

    /// Non-negative exactly when `h` is admissible.
    pub fn margin(&self, h: f64) -> f64 {
        (h - self.lower).min(self.upper - h)
    }
}

fn margin(params: &ModelParams, x: &State, kind: SwitchKind) -> f64 {
    ComfortBounds::at(params, x, kind).margin(x[3])
}

#[derive(Debug, Clone)]
pub struct ProjectionOutcome {
    pub variables: DecisionVariables,
    /// Free switches left at their previous time for lack of a feasible one.
    pub reverted: usize,
    /// Sleep episodes removed because no admissible placement was left.
    pub dropped: usize,
}

/// Work-free stretch that holds the sleep episode a switch belongs to.
fn episode_gap(problem: &Problem<'_>, vars: &DecisionVariables, i: usize) -> Interval {
    let sw = &vars.switches;
    let (first, last) = match sw[i].kind {
        SwitchKind::SleepOnset => (sw[i].t, sw.get(i + 1).map_or(sw[i].t, |s| s.t)),
        SwitchKind::Wake => (if i > 0 { sw[i - 1].t } else { sw[i].t }, sw[i].t),
    };
    let lo = problem
        .work
        .iter()
        .filter(|w| w.end <= first + 1e-9)
        .map(|w| w.end)
        .fold(problem.t0, f64::max);
    let hi = problem
        .work
        .iter()
        .filter(|w| w.start >= last - 1e-9)
        .map(|w| w.start)
        .fold(problem.tf, f64::min);
    Interval::new(lo, hi)
}

/// Integrates one mode without switching from `(t, x)` to `t1`.
fn run_mode(
    problem: &Problem<'_>,
    vars: &DecisionVariables,
    t: f64,
    x: State,
    asleep: bool,
    t1: f64,
    record: bool,
) -> Result<(Vec<Node<4>>, State)> {
    // Sleep never reaches work here; the search window ends at the next work start.
    let forced = if asleep { Vec::new() } else { problem.work.to_vec() };
    let schedule = SleepScheduleSpec::tunable(Vec::new(), forced);
    let cfg = integrator(problem);
    let out = run(
        &HybridModel {
            params: problem.params,
        },
        &RunRequest {
            t0: t,
            t1,
            x0: x,
            asleep0: asleep,
            light: &vars.light,
            schedule: &schedule,
            cfg: &cfg,
            record_from: record.then_some(t),
            extra_stops: &[],
        },
    )?;
    let mut nodes: Vec<Node<4>> = Vec::with_capacity(out.nodes.len());
    for n in out.nodes {
        match nodes.last_mut() {
            Some(last) if (n.t - last.t).abs() < 1e-12 => *last = n,
            _ => nodes.push(n),
        }
    }
    Ok((nodes, out.final_x))
}

/// Piecewise cubic Hermite interpolation of recorded single-mode nodes.
struct Dense<'a> {
    problem: &'a Problem<'a>,
    vars: &'a DecisionVariables,
    nodes: &'a [Node<4>],
    asleep: bool,
}

impl Dense<'_> {
    fn at(&self, t: f64) -> State {
        let n = self.nodes;
        let k = n.partition_point(|p| p.t <= t).clamp(1, n.len() - 1);
        let (a, b) = (&n[k - 1], &n[k]);
        let h = b.t - a.t;
        if h <= 0.0 {
            return b.x;
        }
        let lux = self.vars.light.at(0.5 * (a.t + b.t));
        let params = self.problem.params;
        let piece = piece(params, &a.x, self.asleep);
        let fa = rhs_on(params, &a.x, lux, self.asleep, piece);
        let fb = rhs_on(params, &b.x, lux, self.asleep, piece);
        let s = ((t - a.t) / h).clamp(0.0, 1.0);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut x = [0.0; 4];
        for i in 0..4 {
            x[i] = h00 * a.x[i] + h10 * h * fa[i] + h01 * b.x[i] + h11 * h * fb[i];
        }
        x
    }
}

/// Nearest time to `target` in `[lo, hi]` where the comfort margin is
/// non-negative, located on the feasible side of the boundary.
fn nearest_feasible(
    dense: &Dense<'_>,
    kind: SwitchKind,
    target: f64,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    let p = dense.problem.params;
    let g = |t: f64| margin(p, &dense.at(t), kind);
    if g(target) >= 0.0 {
        return Some(target);
    }
    let mut pts: Vec<f64> = dense
        .nodes
        .iter()
        .map(|n| n.t)
        .filter(|&t| t > lo && t < hi)
        .collect();
    pts.extend([lo, hi, target]);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let vals: Vec<f64> = pts.iter().map(|&t| g(t)).collect();
    let mut best: Option<f64> = None;
    for k in 0..pts.len().saturating_sub(1) {
        let (fa, fb) = (vals[k] >= 0.0, vals[k + 1] >= 0.0);
        if fa == fb {
            continue;
        }
        let (mut good, mut bad) = if fa { (pts[k], pts[k + 1]) } else { (pts[k + 1], pts[k]) };
        while (good - bad).abs() > 1e-10 {
            let mid = 0.5 * (good + bad);
            if g(mid) >= 0.0 {
                good = mid;
            } else {
                bad = mid;
            }
        }
        if best.map_or(true, |b| (good - target).abs() < (b - target).abs()) {
            best = Some(good);
        }
    }
    best
}

/// Clamps light into `[0, light_max]` and moves each free switch to the
/// nearest admissible time after a gradient step of the given sizes.
///
/// Switches are processed in time order; each is searched along the
/// trajectory of the mode preceding it, started from the already projected
/// earlier switches. A switch with no admissible time within the search
/// window keeps its previous time.
pub fn project(
    problem: &Problem<'_>,
    vars: &DecisionVariables,
    eval: &Evaluation,
    eta_i: f64,
    eta_t: f64,
) -> Result<ProjectionOutcome> {
    let mut next = vars.clone();
    for (v, g) in next.light.values_lux.iter_mut().zip(&eval.grad_light) {
        *v = (*v - eta_i * g).clamp(0.0, problem.light_max);
    }
    let candidates: Vec<f64> = vars
        .switches
        .iter()
        .zip(eval.grad_switch.iter().zip(&eval.active))
        .map(|(s, (g, a))| match (s.pinned, *a) {
            (true, _) => s.t,
            // Aim past the bound so the switch lands wherever it moved to.
            (false, true) => s.t - ACTIVE_REACH_H.copysign(*g),
            (false, false) => s.t - eta_t * g,
        })
        .collect();
    let mut old = vars.clone();
    let mut candidates = candidates;
    let mut dropped = 0;
    loop {
        let (times, failed) = project_times(problem, &old, &next, &candidates)?;
        // A sleep episode squeezed out of its window is removed as a whole,
        // and so is a last switch pushed against the horizon.
        let removable = failed.iter().find_map(|&i| {
            let sw = &old.switches;
            if i + 1 == sw.len() && !sw[i].pinned {
                return Some(i..i + 1);
            }
            let k = match sw[i].kind {
                SwitchKind::SleepOnset if i + 1 < sw.len() => i,
                SwitchKind::Wake if i > 0 => i - 1,
                _ => return None,
            };
            (sw[k].kind == SwitchKind::SleepOnset && !(sw[k].pinned && sw[k + 1].pinned))
                .then_some(k..k + 2)
        });
        match removable {
            Some(range) => {
                for v in [&mut old, &mut next] {
                    v.switches.drain(range.clone());
                }
                candidates.drain(range);
                dropped += 1;
            }
            None => {
                for (s, t) in next.switches.iter_mut().zip(times) {
                    s.t = t;
                }
                return Ok(ProjectionOutcome {
                    variables: next,
                    reverted: failed.len(),
                    dropped,
                });
            }
        }
    }
}

fn project_times(
    problem: &Problem<'_>,
    old: &DecisionVariables,
    next: &DecisionVariables,
    candidates: &[f64],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let cfg = &problem.cfg;
    let n = old.switches.len();
    let mut times = candidates.to_vec();
    let mut failed = Vec::new();
    let (mut t_cur, mut x_cur) = (problem.t0, problem.x0);
    let mut asleep = old.initial_asleep;
    let fallback = || (old.switches.iter().map(|s| s.t).collect::<Vec<_>>(), Vec::new());
    for i in 0..n {
        let sw = old.switches[i];
        let mut chosen = sw.t;
        let mut search: Option<Vec<Node<4>>> = None;
        if !sw.pinned {
            let gap = episode_gap(problem, old, i);
            let lo = if i == 0 { t_cur } else { t_cur + cfg.min_duration_h }.max(gap.start);
            let hi = match times.get(i + 1) {
                Some(&t) => t - cfg.min_duration_h,
                None => problem.tf,
            }
            .min(gap.end);
            let target = candidates[i].clamp(lo, hi.max(lo));
            let w_lo = lo.max(target - cfg.projection_window_h);
            let w_hi = hi.min(target + cfg.projection_window_h);
            let found = if lo <= hi && w_hi > t_cur {
                let (nodes, _) = run_mode(problem, next, t_cur, x_cur, asleep, w_hi, true)?;
                let dense = Dense {
                    problem,
                    vars: next,
                    nodes: &nodes,
                    asleep,
                };
                let t = nearest_feasible(&dense, sw.kind, target, w_lo, w_hi);
                search = Some(nodes);
                t
            } else {
                None
            };
            match found {
                Some(t) => chosen = t,
                None => failed.push(i),
            }
        }
        if chosen < t_cur - 1e-12 {
            return Ok(fallback());
        }
        // Advance the running state to the chosen switch in the current mode.
        let (from_t, from_x) = match &search {
            Some(nodes) => {
                let k = nodes.partition_point(|p| p.t <= chosen).max(1) - 1;
                (nodes[k].t, nodes[k].x)
            }
            None => (t_cur, x_cur),
        };
        x_cur = if chosen > from_t {
            run_mode(problem, next, from_t, from_x, asleep, chosen, false)?.1
        } else {
            from_x
        };
        t_cur = chosen;
        times[i] = chosen;
        asleep = sw.kind == SwitchKind::SleepOnset;
    }
    let mut trial = next.clone();
    for (s, &t) in trial.switches.iter_mut().zip(&times) {
        s.t = t;
    }
    if !structure_problems(problem, &trial).is_empty() {
        return Ok(fallback());
    }
    Ok((times, failed))
}

/// Ordering, duration and work-overlap violations.
fn structure_problems(problem: &Problem<'_>, vars: &DecisionVariables) -> Vec<String> {
    let mut out = Vec::new();
    let sw = &vars.switches;
    let min = problem.cfg.min_duration_h - 1e-9;
    for k in 0..sw.len() {
        let prev = if k == 0 { problem.t0 } else { sw[k - 1].t };
        let free = !sw[k].pinned || (k > 0 && !sw[k - 1].pinned);
        if sw[k].t < prev || (k > 0 && free && sw[k].t - prev < min) {
            out.push(format!("switch {k} at {:.4} h violates ordering", sw[k].t));
        }
    }
    if let Some(last) = sw.last() {
        if last.t > problem.tf {
            out.push("last switch lies beyond the horizon".into());
        }
    }
    let spec = SleepScheduleSpec::tunable(vars.schedule_switches(), problem.work.to_vec());
    if let Err(e) = spec.validate(vars.initial_asleep) {
        out.push(e.to_string());
    }
    out
}

/// Constraint audit of an evaluated schedule: light bounds, switch ordering
/// and the comfort constraint at every free switch.
pub fn audit(problem: &Problem<'_>, vars: &DecisionVariables, eval: &Evaluation) -> Vec<String> {
    let mut out = structure_problems(problem, vars);
    for (k, &v) in vars.light.values_lux.iter().enumerate() {
        if !(v >= 0.0 && v <= problem.light_max) {
            out.push(format!("light bin {k} = {v} lux out of range"));
        }
    }
    for (k, (sw, x)) in vars.switches.iter().zip(&eval.switch_states).enumerate() {
        if sw.pinned {
            continue;
        }
        let m = margin(problem.params, x, sw.kind);
        if m < -AUDIT_TOL {
            let b = ComfortBounds::at(problem.params, x, sw.kind);
            out.push(format!(
                "switch {k} ({:?}) at {:.4} h has H = {:.6} outside [{:.6}, {:.6}]",
                sw.kind, sw.t, x[3], b.lower, b.upper
            ));
        }
    }
    out
}
