//! Shared driver for the switched (hybrid) systems of all three models.

use crate::error::{Error, Result};
use crate::integrate::{dopri_step, error_norm, rk4_step};
use crate::light::LightSignal;
use crate::model::SleepMode;

use super::schedule::{SleepScheduleSpec, SwitchKind};
use super::{Event, EventKind, IntegratorConfig, Method};

/// Continuous dynamics of one model together with its switching rule.
pub(crate) trait SwitchedModel<const N: usize> {
    fn rhs(&self, x: &[f64; N], lux: f64, mode: SleepMode) -> Result<[f64; N]>;

    /// Right-hand side on a given smooth piece (see [`SwitchedModel::piece`]).
    fn rhs_on(&self, x: &[f64; N], lux: f64, mode: SleepMode, _piece: u8) -> Result<[f64; N]> {
        self.rhs(x, lux, mode)
    }

    /// Becomes non-negative when the model leaves the current spontaneous mode.
    fn guard(&self, x: &[f64; N], asleep: bool) -> f64;

    /// Adjusts the state on entering a mode (e.g. clamping a potential).
    fn enter(&self, _x: &mut [f64; N], _mode: SleepMode) {}

    /// Index of the smooth piece of a piecewise right-hand side. Steps are
    /// cut where it changes so that none straddles a jump.
    fn piece(&self, _x: &[f64; N], _mode: SleepMode) -> u8 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Node<const N: usize> {
    pub t: f64,
    pub x: [f64; N],
    pub mode: SleepMode,
}

#[derive(Debug, Clone)]
pub(crate) struct RunOutput<const N: usize> {
    pub nodes: Vec<Node<N>>,
    pub events: Vec<Event>,
    pub final_x: [f64; N],
    pub final_mode: SleepMode,
}

pub(crate) struct RunRequest<'a, const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub x0: [f64; N],
    pub asleep0: bool,
    pub light: &'a LightSignal,
    pub schedule: &'a SleepScheduleSpec,
    pub cfg: &'a IntegratorConfig,
    /// Record nodes from this time on; `None` records nothing.
    pub record_from: Option<f64>,
    /// Additional times the step grid must hit.
    pub extra_stops: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Action {
    ForcedEnd,
    ForcedStart,
    Switch(SwitchKind),
}

const TIME_EPS: f64 = 1e-9;

struct Driver<'a, const N: usize, M: SwitchedModel<N>> {
    model: &'a M,
    req: &'a RunRequest<'a, N>,
    t: f64,
    x: [f64; N],
    asleep: bool,
    forced: bool,
    h_adaptive: f64,
    out: RunOutput<N>,
}

impl<'a, const N: usize, M: SwitchedModel<N>> Driver<'a, N, M> {
    fn mode(&self) -> SleepMode {
        if self.forced {
            SleepMode::FORCED_WAKE
        } else {
            SleepMode::from_beta(self.asleep)
        }
    }

    fn spontaneous(&self) -> bool {
        self.req.schedule.is_spontaneous() && !self.forced
    }

    fn record(&mut self) {
        if let Some(from) = self.req.record_from {
            if self.t >= from - TIME_EPS {
                self.out.nodes.push(Node {
                    t: self.t,
                    x: self.x,
                    mode: self.mode(),
                });
            }
        }
    }

    fn event(&mut self, kind: EventKind) {
        self.out.events.push(Event { t: self.t, kind });
    }

    fn set_asleep(&mut self, asleep: bool) {
        if asleep == self.asleep {
            return;
        }
        self.asleep = asleep;
        let mode = self.mode();
        self.model.enter(&mut self.x, mode);
        self.event(if asleep {
            EventKind::FellAsleep
        } else {
            EventKind::Woke
        });
        self.record();
    }

    fn apply(&mut self, action: Action) {
        match action {
            Action::ForcedStart => {
                self.set_asleep(false);
                self.forced = true;
                let mode = self.mode();
                self.model.enter(&mut self.x, mode);
                self.event(EventKind::ShiftStart);
                self.record();
            }
            Action::ForcedEnd => {
                self.forced = false;
                self.event(EventKind::ShiftEnd);
                self.record();
            }
            Action::Switch(kind) => self.set_asleep(kind == SwitchKind::SleepOnset),
        }
    }

    fn check_immediate(&mut self) {
        if self.spontaneous() && self.model.guard(&self.x, self.asleep) >= 0.0 {
            self.set_asleep(!self.asleep);
        }
    }

    fn step(&self, x: &[f64; N], h: f64, lux: f64) -> Result<([f64; N], f64)> {
        let mode = self.mode();
        // Every stage stays on the piece the step starts from.
        let piece = self.model.piece(&self.x, mode);
        let mut f = |_t: f64, y: &[f64; N]| self.model.rhs_on(y, lux, mode, piece);
        match self.req.cfg.method {
            Method::Rk4Fixed => Ok((rk4_step(&mut f, self.t, x, h)?, 0.0)),
            Method::Rk45Adaptive => {
                let (y, err) = dopri_step(&mut f, self.t, x, h)?;
                let norm = error_norm(x, &y, &err, self.req.cfg.abs_tol, self.req.cfg.rel_tol);
                Ok((y, norm))
            }
        }
    }

    /// Advances from `self.t` to `target` within one light bin and one mode.
    /// Returns early (with `self.t < target`) when a spontaneous switch occurs.
    fn advance(&mut self, target: f64) -> Result<()> {
        let lux = self.req.light.at(0.5 * (self.t + target));
        while self.t < target - TIME_EPS {
            let remaining = target - self.t;
            let (h, y) = match self.req.cfg.method {
                Method::Rk4Fixed => (remaining, self.step(&self.x, remaining, lux)?.0),
                Method::Rk45Adaptive => loop {
                    let h = self.h_adaptive.min(remaining);
                    if h < 1e-12 {
                        return Err(Error::integration(self.t, "step size underflow"));
                    }
                    let (y, norm) = self.step(&self.x, h, lux)?;
                    let factor = if norm == 0.0 {
                        5.0
                    } else {
                        (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if norm <= 1.0 && y.iter().all(|v| v.is_finite()) {
                        if h >= self.h_adaptive * (1.0 - 1e-12) || factor < 1.0 {
                            self.h_adaptive = (h * factor).min(self.req.cfg.max_step);
                        }
                        break (h, y);
                    }
                    self.h_adaptive = h * factor.min(0.5);
                },
            };
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::integration(self.t, "non-finite state"));
            }
            if self.spontaneous() && self.model.guard(&y, self.asleep) >= 0.0 {
                let (theta, y_event) = self.locate(h, lux)?;
                self.t += theta * h;
                self.x = y_event;
                self.record();
                self.set_asleep(!self.asleep);
                return Ok(());
            }
            let mode = self.mode();
            if self.model.piece(&y, mode) != self.model.piece(&self.x, mode) {
                let (theta, y_cut) = self.locate_by(h, lux, |y| {
                    self.model.piece(y, mode) != self.model.piece(&self.x, mode)
                })?;
                self.t += theta * h;
                self.x = y_cut;
                self.record();
                if self.spontaneous() && self.model.guard(&self.x, self.asleep) >= 0.0 {
                    self.set_asleep(!self.asleep);
                    return Ok(());
                }
                continue;
            }
            self.t += h;
            if (target - self.t).abs() < TIME_EPS {
                self.t = target;
            }
            self.x = y;
            self.record();
        }
        Ok(())
    }

    /// Bisection on the fraction of a step at which the guard turns non-negative.
    fn locate(&self, h: f64, lux: f64) -> Result<(f64, [f64; N])> {
        self.locate_by(h, lux, |y| self.model.guard(y, self.asleep) >= 0.0)
    }

    /// Bisection on the fraction of a step at which `crossed` becomes true.
    fn locate_by(
        &self,
        h: f64,
        lux: f64,
        crossed: impl Fn(&[f64; N]) -> bool,
    ) -> Result<(f64, [f64; N])> {
        let tol = self.req.cfg.event_tol / h;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut y_hi = self.step(&self.x, h, lux)?.0;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let y = self.step(&self.x, mid * h, lux)?.0;
            if crossed(&y) {
                hi = mid;
                y_hi = y;
            } else {
                lo = mid;
            }
        }
        Ok((hi, y_hi))
    }
}

/// Integrates a switched model over `[t0, t1]`.
pub(crate) fn run<const N: usize, M: SwitchedModel<N>>(
    model: &M,
    req: &RunRequest<'_, N>,
) -> Result<RunOutput<N>> {
    let cfg = req.cfg;
    cfg.validate()?;
    req.schedule.validate(req.asleep0)?;
    if !(req.t1 >= req.t0) {
        return Err(Error::Config(format!(
            "end time {} precedes start time {}",
            req.t1, req.t0
        )));
    }

    let mut actions: Vec<(f64, Action)> = Vec::new();
    for iv in &req.schedule.forced_wake_intervals {
        actions.push((iv.start, Action::ForcedStart));
        actions.push((iv.end, Action::ForcedEnd));
    }
    if !req.schedule.is_spontaneous() {
        for sw in &req.schedule.switches {
            actions.push((sw.t, Action::Switch(sw.kind)));
        }
    }
    // Stable sort keeps switch order; ends precede starts at equal times.
    actions.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            let rank = |x: &Action| match x {
                Action::ForcedEnd => 0,
                Action::Switch(_) => 1,
                Action::ForcedStart => 2,
            };
            rank(&a.1).cmp(&rank(&b.1))
        })
    });

    let mut stops: Vec<f64> = req.light.breakpoints(req.t0, req.t1);
    stops.extend(actions.iter().map(|a| a.0));
    stops.extend_from_slice(req.extra_stops);
    stops.retain(|&s| s > req.t0 + TIME_EPS && s < req.t1 - TIME_EPS);
    stops.push(req.t1);
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() < TIME_EPS);

    let mut d = Driver {
        model,
        req,
        t: req.t0,
        x: req.x0,
        asleep: req.asleep0,
        forced: false,
        h_adaptive: cfg.step,
        out: RunOutput {
            nodes: Vec::new(),
            events: Vec::new(),
            final_x: req.x0,
            final_mode: SleepMode::from_beta(req.asleep0),
        },
    };

    // Actions at or before t0 define the initial mode.
    let mut next_action = 0;
    while next_action < actions.len() && actions[next_action].0 <= req.t0 + TIME_EPS {
        if let (t, Action::Switch(kind)) = actions[next_action] {
            if (t - req.t0).abs() <= TIME_EPS {
                d.asleep = kind == SwitchKind::SleepOnset;
            }
        }
        next_action += 1;
    }
    if req.schedule.forced_at(req.t0) {
        d.asleep = false;
        d.forced = true;
        let mode = d.mode();
        model.enter(&mut d.x, mode);
    }
    d.record();
    d.check_immediate();

    let h = cfg.step;
    let mut stop_idx = 0;
    while d.t < req.t1 - TIME_EPS {
        while stops[stop_idx] <= d.t + TIME_EPS {
            stop_idx += 1;
        }
        let stop = stops[stop_idx];
        let k = ((d.t - req.t0) / h + TIME_EPS / h).floor() + 1.0;
        let grid = req.t0 + k * h;
        let target = match cfg.method {
            Method::Rk4Fixed if grid < stop - TIME_EPS => grid,
            _ => stop,
        };
        d.advance(target)?;
        if (d.t - stop).abs() <= TIME_EPS {
            d.t = stop;
            while next_action < actions.len() && actions[next_action].0 <= stop + TIME_EPS {
                let action = actions[next_action].1;
                d.apply(action);
                next_action += 1;
            }
            d.check_immediate();
        }
    }
    d.out.final_x = d.x;
    d.out.final_mode = d.mode();
    Ok(d.out)
}
