//! Forward pass, objective, costate and gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{
    hybrid_trajectory, run, HybridModel, IntegratorConfig, Node, RunOutput, RunRequest,
    SleepScheduleSpec, SwitchKind, Trajectory,
};

use super::dynamics::{
    jacobian_on, light_sensitivity, piece, rhs, rhs_on, running_cost, running_cost_gradient, State,
};
use super::projection::ComfortBounds;
use super::{DecisionVariables, Problem};
use crate::params::ModelParams;

const TIME_EPS: f64 = 1e-9;
/// Distance from a comfort bound below which a switch counts as on it.
const ACTIVE_TOL: f64 = 1e-6;

/// Closest comfort bound as `c(x) >= 0` with its gradient, if the switch
/// is near one.
fn active_bound(p: &ModelParams, x: &State, kind: SwitchKind) -> Option<(f64, [f64; 4])> {
    let b = ComfortBounds::at(p, x, kind);
    let lower = (x[3] - b.lower).abs() <= (b.upper - x[3]).abs();
    let c = |y: &State| {
        let b = ComfortBounds::at(p, y, kind);
        if lower {
            y[3] - b.lower
        } else {
            b.upper - y[3]
        }
    };
    let value = c(x);
    if value.abs() > ACTIVE_TOL {
        return None;
    }
    let mut grad = [0.0; 4];
    for k in 0..2 {
        let d = 1e-6 * x[k].abs().max(1.0);
        let (mut a, mut b) = (*x, *x);
        a[k] += d;
        b[k] -= d;
        grad[k] = (c(&a) - c(&b)) / (2.0 * d);
    }
    grad[3] = if lower { 1.0 } else { -1.0 };
    Some((value, grad))
}

/// Costate `lambda` (adjoint of `x, x_c, n, H`) at the forward nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub lambda: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    a: usize,
    b: usize,
    lux: f64,
    asleep: bool,
    /// Branch piece of the start node, held over the step.
    piece: u8,
    weight: f64,
}

impl Step {
    fn h(&self, nodes: &[Node<4>]) -> f64 {
        nodes[self.b].t - nodes[self.a].t
    }
}

/// Forward trajectory, objective value, costate and gradients for one set of
/// decision variables.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Objective `J` (minimized).
    pub j: f64,
    pub costate: CostateTrajectory,
    /// `dJ / dI` per light bin.
    pub grad_light: Vec<f64>,
    /// `dJ / dt_i` per switch (pinned switches included, unused).
    pub grad_switch: Vec<f64>,
    /// State just before each switch.
    pub switch_states: Vec<[f64; 4]>,
    /// Switches held on a comfort bound that the descent direction would
    /// cross. They follow the bound, and the costate carries their effect.
    pub active: Vec<bool>,
    out: RunOutput<4>,
}

impl Evaluation {
    pub fn trajectory(&self, problem: &Problem<'_>, vars: &DecisionVariables) -> Trajectory {
        hybrid_trajectory(problem.params, self.out.clone(), problem.tf, &vars.light)
    }
}

pub(crate) fn integrator(problem: &Problem<'_>) -> IntegratorConfig {
    IntegratorConfig::rk4(problem.cfg.step_h).with_event_tol(1e-9_f64.min(problem.cfg.step_h))
}

pub(crate) fn forward(problem: &Problem<'_>, vars: &DecisionVariables) -> Result<RunOutput<4>> {
    let schedule = SleepScheduleSpec::tunable(vars.schedule_switches(), problem.work.to_vec());
    let cfg = integrator(problem);
    run(
        &HybridModel {
            params: problem.params,
        },
        &RunRequest {
            t0: problem.t0,
            t1: problem.tf,
            x0: problem.x0,
            asleep0: vars.initial_asleep,
            light: &vars.light,
            schedule: &schedule,
            cfg: &cfg,
            record_from: Some(problem.t0),
            extra_stops: &[],
        },
    )
}

fn steps(problem: &Problem<'_>, vars: &DecisionVariables, nodes: &[Node<4>]) -> Vec<Step> {
    (0..nodes.len().saturating_sub(1))
        .filter(|&k| nodes[k + 1].t - nodes[k].t > TIME_EPS)
        .map(|k| {
            let mid = 0.5 * (nodes[k].t + nodes[k + 1].t);
            let asleep = nodes[k + 1].mode.is_asleep();
            Step {
                a: k,
                b: k + 1,
                lux: vars.light.at(mid),
                asleep,
                piece: piece(problem.params, &nodes[k].x, asleep),
                weight: problem.objective.weight(mid, asleep, problem.work),
            }
        })
        .collect()
}

/// Cubic Hermite midpoint of a step.
fn hermite_mid(xa: &State, xb: &State, fa: &State, fb: &State, h: f64) -> State {
    let mut m = [0.0; 4];
    for i in 0..4 {
        m[i] = 0.5 * (xa[i] + xb[i]) + h / 8.0 * (fa[i] - fb[i]);
    }
    m
}

/// Costate derivative `-dL/dX - (dD/dX)^T lambda`.
fn costate_rhs(problem: &Problem<'_>, x: &State, lam: &[f64; 4], s: &Step) -> [f64; 4] {
    let jac = jacobian_on(problem.params, x, s.lux, s.asleep, s.piece);
    let dl = running_cost_gradient(problem.params, s.weight);
    let mut out = [0.0; 4];
    for j in 0..4 {
        let mut acc = 0.0;
        for i in 0..4 {
            acc += jac[i][j] * lam[i];
        }
        out[j] = -dl[j] - acc;
    }
    out
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Runs the forward model and the adjoint for `vars`.
pub fn evaluate(problem: &Problem<'_>, vars: &DecisionVariables) -> Result<Evaluation> {
    let p = problem.params;
    let out = forward(problem, vars)?;
    let nodes = &out.nodes;
    let steps = steps(problem, vars, nodes);

    // Objective by Simpson's rule with a Hermite midpoint.
    let mut j = 0.0;
    let mut mids = Vec::with_capacity(steps.len());
    for s in &steps {
        let (xa, xb) = (&nodes[s.a].x, &nodes[s.b].x);
        let h = s.h(nodes);
        let fa = rhs_on(p, xa, s.lux, s.asleep, s.piece);
        let fb = rhs_on(p, xb, s.lux, s.asleep, s.piece);
        let xm = hermite_mid(xa, xb, &fa, &fb, h);
        if s.weight != 0.0 {
            j += h / 6.0
                * (running_cost(p, xa, s.weight)
                    + 4.0 * running_cost(p, &xm, s.weight)
                    + running_cost(p, xb, s.weight));
        }
        mids.push(xm);
    }

    // First and last node recorded at each switch.
    let mut at_switch = Vec::with_capacity(vars.switches.len());
    for sw in &vars.switches {
        let pre = nodes
            .iter()
            .position(|n| (n.t - sw.t).abs() <= TIME_EPS)
            .ok_or_else(|| Error::integration(sw.t, "switch missing from the forward pass"))?;
        let mut post = pre;
        while post + 1 < nodes.len() && nodes[post + 1].t - sw.t <= TIME_EPS {
            post += 1;
        }
        at_switch.push((pre, post));
    }
    let switch_gradient = |i: usize, lam: &[f64; 4]| -> f64 {
        let sw = &vars.switches[i];
        let x = nodes[at_switch[i].0].x;
        let before = sw.kind == SwitchKind::Wake;
        let after = !before;
        let (tm, tp) = (sw.t - 1e-7, sw.t + 1e-7);
        let lm = running_cost(p, &x, problem.objective.weight(tm, before, problem.work));
        let lp = running_cost(p, &x, problem.objective.weight(tp, after, problem.work));
        let fm = rhs(p, &x, vars.light.at(tm), before);
        let fp = rhs(p, &x, vars.light.at(tp), after);
        let mut jump = [0.0; 4];
        for i in 0..4 {
            jump[i] = fm[i] - fp[i];
        }
        lm - lp + dot(lam, &jump)
    };
    let mut active = vec![false; vars.switches.len()];
    // An active switch moves with its bound c(x) = 0, so the costate jumps by
    // -G grad(c) / (dc/dt) where G is the switch gradient.
    let mut bound_jump = |i: usize, lam_post: &[f64; 4]| -> Option<[f64; 4]> {
        let sw = &vars.switches[i];
        if sw.pinned || !problem.cfg.follow_active_bounds {
            return None;
        }
        let x = nodes[at_switch[i].0].x;
        let (c, grad) = active_bound(p, &x, sw.kind)?;
        let before = sw.kind == SwitchKind::Wake;
        let f = rhs(p, &x, vars.light.at(sw.t - 1e-7), before);
        let rate = dot(&grad, &f);
        let g = switch_gradient(i, lam_post);
        if c.abs() > ACTIVE_TOL || rate.abs() < 1e-12 || g * rate <= 0.0 {
            return None;
        }
        active[i] = true;
        let mut l = *lam_post;
        for k in 0..4 {
            l[k] -= g * grad[k] / rate;
        }
        Some(l)
    };
    let jump_at: std::collections::HashMap<usize, usize> =
        at_switch.iter().enumerate().map(|(i, &(pre, _))| (pre, i)).collect();

    // Costate: backward RK4 from lambda(tf) = 0, carried across switches.
    let mut lambda = vec![[0.0; 4]; nodes.len()];
    let mut carry = |lambda: &mut Vec<[f64; 4]>, k: usize| {
        lambda[k] = lambda[k + 1];
        if let Some(&i) = jump_at.get(&k) {
            let post = at_switch[i].1;
            if let Some(l) = bound_jump(i, &lambda[post]) {
                lambda[k] = l;
            }
        }
    };
    let mut next = nodes.len().saturating_sub(1);
    for (s, xm) in steps.iter().zip(&mids).rev() {
        for k in (s.b..next).rev() {
            carry(&mut lambda, k);
        }
        let h = s.h(nodes);
        let lb = lambda[s.b];
        let add = |l: &[f64; 4], k: &[f64; 4], c: f64| {
            let mut o = *l;
            for i in 0..4 {
                o[i] -= c * k[i];
            }
            o
        };
        let k1 = costate_rhs(problem, &nodes[s.b].x, &lb, s);
        let k2 = costate_rhs(problem, xm, &add(&lb, &k1, 0.5 * h), s);
        let k3 = costate_rhs(problem, xm, &add(&lb, &k2, 0.5 * h), s);
        let k4 = costate_rhs(problem, &nodes[s.a].x, &add(&lb, &k3, h), s);
        let mut la = lb;
        for i in 0..4 {
            la[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !la.iter().all(|v| v.is_finite()) {
            return Err(Error::integration(nodes[s.a].t, "non-finite costate"));
        }
        lambda[s.a] = la;
        next = s.a;
    }
    for k in (0..next).rev() {
        carry(&mut lambda, k);
    }
    drop(carry);

    // Light gradient: Simpson over each step, accumulated per bin.
    let eps = problem.cfg.grad_regularization_eps;
    let mut grad_light = vec![0.0; vars.light.values_lux.len()];
    for (s, xm) in steps.iter().zip(&mids).filter(|(s, _)| !s.asleep) {
        let h = s.h(nodes);
        let Some(bin) = vars.light.bin_index(0.5 * (nodes[s.a].t + nodes[s.b].t)) else {
            continue;
        };
        let (xa, xb) = (&nodes[s.a].x, &nodes[s.b].x);
        let (la, lb) = (&lambda[s.a], &lambda[s.b]);
        let ga = costate_rhs(problem, xa, la, s);
        let gb = costate_rhs(problem, xb, lb, s);
        let lm = hermite_mid(la, lb, &ga, &gb, h);
        let phi = |x: &State, l: &[f64; 4]| dot(l, &light_sensitivity(p, x, s.lux, false, eps));
        grad_light[bin] += h / 6.0 * (phi(xa, la) + 4.0 * phi(xm, &lm) + phi(xb, lb));
    }

    // Switch-time gradient from the jump of the Hamiltonian.
    let grad_switch = (0..vars.switches.len())
        .map(|i| switch_gradient(i, &lambda[at_switch[i].1]))
        .collect();
    let switch_states = at_switch.iter().map(|&(pre, _)| nodes[pre].x).collect();

    let costate = CostateTrajectory {
        times: nodes.iter().map(|n| n.t).collect(),
        lambda,
    };
    Ok(Evaluation {
        j,
        costate,
        grad_light,
        grad_switch,
        switch_states,
        active,
        out,
    })
}
