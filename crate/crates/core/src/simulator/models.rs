//! The three models as switched systems.

use crate::bifurcation::{vv_at_equilibrium, BranchCoefficients};
use crate::error::Result;
use crate::model::{
    alertness_pr, alertness_tp, circadian_drive, circadian_rhs, full_pr_rhs, homeostasis_rhs_pr,
    q_sigmoid, sleep_drive, sleep_propensity, three_process_rhs, thresholds, CircadianState,
    FullPrState, SleepMode, ThreeProcessState,
};
use crate::params::ModelParams;

use super::engine::SwitchedModel;
use super::Sample;

fn circ(x: &[f64]) -> CircadianState {
    CircadianState {
        x: x[0],
        xc: x[1],
        n: x[2],
    }
}

/// Reduced neuronal model on `(x, x_c, n, H)`.
#[derive(Debug, Clone)]
pub(crate) struct Hybrid<'a> {
    pub params: &'a ModelParams,
}

impl Hybrid<'_> {
    pub fn branches(&self) -> &BranchCoefficients {
        &self.params.branches
    }

    /// Sleep drive and the branch potential for the given mode.
    pub fn drive_and_vm(&self, x: &[f64; 4], asleep: bool) -> (f64, f64) {
        let np = &self.params.neuronal;
        let d = sleep_drive(circadian_drive(x[0], x[1], np), x[3], np);
        let vm = if asleep {
            self.branches().v1(d)
        } else {
            self.branches().v2(d)
        };
        (d, vm)
    }

    fn vm_on(&self, x: &[f64; 4], asleep: bool, piece: u8) -> f64 {
        let np = &self.params.neuronal;
        let d = sleep_drive(circadian_drive(x[0], x[1], np), x[3], np);
        if asleep {
            self.branches().v1(d)
        } else {
            self.branches().v2_on(d, piece)
        }
    }

    pub fn sample(&self, t: f64, x: &[f64; 4], lux: f64, mode: SleepMode) -> Sample {
        let np = &self.params.neuronal;
        let c = circadian_drive(x[0], x[1], np);
        let th = thresholds(c, np);
        let (d, vm) = self.drive_and_vm(x, mode.is_asleep());
        Sample {
            t,
            x: x[0],
            xc: x[1],
            n: x[2],
            h: x[3],
            w: f64::NAN,
            vm,
            vv: vv_at_equilibrium(vm, d, np),
            dv: d,
            c,
            h_plus: th.h_plus,
            h_minus: th.h_minus,
            beta: mode.beta(),
            lux,
            alertness: alertness_pr(x[3], &th, mode),
        }
    }
}

impl SwitchedModel<4> for Hybrid<'_> {
    fn rhs(&self, x: &[f64; 4], lux: f64, mode: SleepMode) -> Result<[f64; 4]> {
        self.rhs_on(x, lux, mode, self.piece(x, mode))
    }

    fn rhs_on(&self, x: &[f64; 4], lux: f64, mode: SleepMode, piece: u8) -> Result<[f64; 4]> {
        let [dx, dxc, dn] = circadian_rhs(&circ(x), lux, mode, &self.params.circadian)?;
        let vm = self.vm_on(x, mode.is_asleep(), piece);
        let np = &self.params.neuronal;
        Ok([dx, dxc, dn, homeostasis_rhs_pr(x[3], q_sigmoid(vm, np), np)])
    }

    fn guard(&self, x: &[f64; 4], asleep: bool) -> f64 {
        let th = thresholds(circadian_drive(x[0], x[1], &self.params.neuronal), &self.params.neuronal);
        if asleep {
            th.h_minus - x[3]
        } else {
            x[3] - th.h_plus
        }
    }

    fn piece(&self, x: &[f64; 4], mode: SleepMode) -> u8 {
        if mode.is_asleep() {
            return 0;
        }
        let (d, _) = self.drive_and_vm(x, false);
        self.branches().v2_piece(d)
    }
}

/// Hybrid dynamics held asleep until `H` drops below the sleep threshold.
pub(crate) struct SleepUntilRested<'a>(pub Hybrid<'a>);

impl SwitchedModel<4> for SleepUntilRested<'_> {
    fn rhs(&self, x: &[f64; 4], lux: f64, mode: SleepMode) -> Result<[f64; 4]> {
        self.0.rhs(x, lux, mode)
    }

    fn rhs_on(&self, x: &[f64; 4], lux: f64, mode: SleepMode, piece: u8) -> Result<[f64; 4]> {
        self.0.rhs_on(x, lux, mode, piece)
    }

    fn guard(&self, x: &[f64; 4], asleep: bool) -> f64 {
        let np = &self.0.params.neuronal;
        let th = thresholds(circadian_drive(x[0], x[1], np), np);
        if asleep {
            th.h_plus - x[3]
        } else {
            f64::NEG_INFINITY
        }
    }

    fn piece(&self, x: &[f64; 4], mode: SleepMode) -> u8 {
        self.0.piece(x, mode)
    }
}

/// Full neuronal model on `(x, x_c, n, V_m, V_v, H)`.
#[derive(Debug, Clone)]
pub(crate) struct FullPr<'a> {
    pub params: &'a ModelParams,
}

fn full_state(x: &[f64; 6]) -> FullPrState {
    FullPrState {
        circadian: circ(x),
        vm: x[3],
        vv: x[4],
        h: x[5],
    }
}

impl FullPr<'_> {
    pub fn sample(&self, t: f64, x: &[f64; 6], lux: f64, mode: SleepMode) -> Sample {
        let np = &self.params.neuronal;
        let c = circadian_drive(x[0], x[1], np);
        let th = thresholds(c, np);
        Sample {
            t,
            x: x[0],
            xc: x[1],
            n: x[2],
            h: x[5],
            w: f64::NAN,
            vm: x[3],
            vv: x[4],
            dv: sleep_drive(c, x[5], np),
            c,
            h_plus: th.h_plus,
            h_minus: th.h_minus,
            beta: mode.beta(),
            lux,
            alertness: alertness_pr(x[5], &th, mode),
        }
    }
}

impl SwitchedModel<6> for FullPr<'_> {
    fn rhs(&self, x: &[f64; 6], lux: f64, mode: SleepMode) -> Result<[f64; 6]> {
        full_pr_rhs(&full_state(x), lux, mode, self.params)
    }

    fn guard(&self, x: &[f64; 6], asleep: bool) -> f64 {
        let th = self.params.neuronal.v_m_th;
        if asleep {
            x[3] - th
        } else {
            th - x[3]
        }
    }

    fn enter(&self, x: &mut [f64; 6], mode: SleepMode) {
        if mode.is_forced_wake() {
            x[3] = self.params.neuronal.v_m_forced;
        }
    }
}

/// Three-process model on `(x, x_c, n, H, W)`.
#[derive(Debug, Clone)]
pub(crate) struct ThreeProcess<'a> {
    pub params: &'a ModelParams,
}

impl ThreeProcess<'_> {
    pub fn sample(&self, t: f64, x: &[f64; 5], lux: f64, mode: SleepMode) -> Sample {
        let tp = &self.params.three_process;
        Sample {
            t,
            x: x[0],
            xc: x[1],
            n: x[2],
            h: x[3],
            w: x[4],
            vm: f64::NAN,
            vv: f64::NAN,
            dv: f64::NAN,
            c: f64::NAN,
            h_plus: tp.h_m + tp.a_c * x[0],
            h_minus: tp.l_m + tp.a_c * x[0],
            beta: mode.beta(),
            lux,
            alertness: alertness_tp(x[0], x[3], x[4], mode, tp),
        }
    }
}

impl SwitchedModel<5> for ThreeProcess<'_> {
    fn rhs(&self, x: &[f64; 5], lux: f64, mode: SleepMode) -> Result<[f64; 5]> {
        let s = ThreeProcessState {
            circadian: circ(x),
            h: x[3],
            w: x[4],
        };
        three_process_rhs(&s, lux, mode, self.params)
    }

    fn guard(&self, x: &[f64; 5], asleep: bool) -> f64 {
        let tp = &self.params.three_process;
        let phi = sleep_propensity(x[3], x[0], tp);
        if asleep {
            tp.l_m - phi
        } else {
            phi - tp.h_m
        }
    }
}
