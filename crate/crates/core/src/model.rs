//! Pure right-hand sides, drives, thresholds and output metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{CircadianParams, ModelParams, NeuronalParams, ThreeProcessParams};

/// Offset of `D_v` at which the wake state disappears (the sleep threshold).
pub const SLEEP_DRIVE_AT_SLEEP_THRESHOLD: f64 = 2.46;
/// Offset of `D_v` at which the sleep state disappears (the wake threshold).
pub const SLEEP_DRIVE_AT_WAKE_THRESHOLD: f64 = 1.45;
/// `D_v` reached after about 2 h of wakefulness beyond the sleep threshold.
pub const SLEEP_DRIVE_AT_MAX_WAKE: f64 = 3.43;
/// `D_v` about 2 h of sleep before the wake threshold is reached.
pub const SLEEP_DRIVE_AT_EARLY_WAKE: f64 = 2.11;

/// Discrete sleep state. Forced wakefulness (work, deprivation) implies awake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SleepMode {
    asleep: bool,
    forced_wake: bool,
}

impl SleepMode {
    pub const AWAKE: SleepMode = SleepMode {
        asleep: false,
        forced_wake: false,
    };
    pub const ASLEEP: SleepMode = SleepMode {
        asleep: true,
        forced_wake: false,
    };
    pub const FORCED_WAKE: SleepMode = SleepMode {
        asleep: false,
        forced_wake: true,
    };

    pub fn from_beta(asleep: bool) -> Self {
        if asleep {
            Self::ASLEEP
        } else {
            Self::AWAKE
        }
    }

    pub fn is_asleep(self) -> bool {
        self.asleep
    }

    pub fn is_forced_wake(self) -> bool {
        self.forced_wake
    }

    /// The sleep indicator β as a number.
    pub fn beta(self) -> f64 {
        if self.asleep {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircadianState {
    pub x: f64,
    pub xc: f64,
    /// Fraction of activated photoreceptors, in `[0, 1]`.
    pub n: f64,
}

/// Continuous state of the three-process model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeProcessState {
    pub circadian: CircadianState,
    pub h: f64,
    /// Sleep inertia.
    pub w: f64,
}

/// Continuous state of the full neuronal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullPrState {
    pub circadian: CircadianState,
    pub vm: f64,
    pub vv: f64,
    pub h: f64,
}

/// Continuous state of the reduced (hybrid) neuronal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    pub circadian: CircadianState,
    pub h: f64,
}

/// Sleep and wake thresholds of `H` for a given circadian drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    /// Sleep threshold `H+`: above it, staying awake needs wake effort.
    pub h_plus: f64,
    /// Wake threshold `H-`.
    pub h_minus: f64,
    /// Upper comfort bound for delaying sleep onset.
    pub h_plus_max: f64,
    /// Upper comfort bound for waking early.
    pub h_minus_max: f64,
}

fn light_rate(i: f64, n: f64, mode: SleepMode, p: &CircadianParams) -> Result<f64> {
    if !(i >= 0.0) {
        return Err(Error::Domain(format!("light intensity must be non-negative, got {i}")));
    }
    if mode.is_asleep() || i == 0.0 {
        return Ok(0.0);
    }
    Ok(p.alpha_0 * (i / p.i0).powf(p.p) * (1.0 - n))
}

/// Photic drive `u` on the pacemaker (1/h); zero while asleep.
pub fn photic_drive(i: f64, n: f64, mode: SleepMode, p: &CircadianParams) -> Result<f64> {
    Ok(p.g * light_rate(i, n, mode, p)?)
}

/// Derivatives `(dx/dt, dx_c/dt, dn/dt)` of the light-driven pacemaker.
pub fn circadian_rhs(
    s: &CircadianState,
    i: f64,
    mode: SleepMode,
    p: &CircadianParams,
) -> Result<[f64; 3]> {
    let alpha = light_rate(i, s.n, mode, p)?;
    let u = p.g * alpha;
    let CircadianState { x, xc, n } = *s;
    let gate = (1.0 - 0.4 * x) * (1.0 - p.k_c * xc) * u;
    let x3 = x * x * x;
    let x7 = x3 * x3 * x;
    let dx = PI / 12.0 * (xc + p.mu * (x / 3.0 + 4.0 / 3.0 * x3 - 256.0 / 105.0 * x7) + gate);
    let dxc = PI / 12.0 * (-p.omega_sq() * x + (p.q * xc - p.k * x) * gate);
    let dn = 60.0 * (alpha - p.gamma * n);
    Ok([dx, dxc, dn])
}

/// Mean firing rate (1/s) of a population with potential `v` (mV).
pub fn q_sigmoid(v: f64, p: &NeuronalParams) -> f64 {
    p.q_max / (1.0 + (-(v - p.theta) / p.sigma).exp())
}

/// Derivative of [`q_sigmoid`] with respect to the potential.
pub fn q_sigmoid_slope(v: f64, p: &NeuronalParams) -> f64 {
    let q = q_sigmoid(v, p);
    q * (1.0 - q / p.q_max) / p.sigma
}

/// Circadian drive `C` of the sleep-active population.
pub fn circadian_drive(x: f64, xc: f64, p: &NeuronalParams) -> f64 {
    0.5 * (1.0 + p.c_x * x + p.c_xc * xc)
}

/// Total sleep drive `D_v` (mV).
pub fn sleep_drive(c: f64, h: f64, p: &NeuronalParams) -> f64 {
    -p.v_vc * c + p.v_vh * h + p.a_v
}

/// Value of `H` at which `D_v` equals `drive` for circadian drive `c`.
pub fn homeostat_at_drive(drive: f64, c: f64, p: &NeuronalParams) -> f64 {
    (drive - p.a_v + p.v_vc * c) / p.v_vh
}

pub fn thresholds(c: f64, p: &NeuronalParams) -> ThresholdSet {
    ThresholdSet {
        h_plus: homeostat_at_drive(SLEEP_DRIVE_AT_SLEEP_THRESHOLD, c, p),
        h_minus: homeostat_at_drive(SLEEP_DRIVE_AT_WAKE_THRESHOLD, c, p),
        h_plus_max: homeostat_at_drive(SLEEP_DRIVE_AT_MAX_WAKE, c, p),
        h_minus_max: homeostat_at_drive(SLEEP_DRIVE_AT_EARLY_WAKE, c, p),
    }
}

/// Gradient of every threshold with respect to `(x, x_c)`; all four share it.
pub fn threshold_gradient(p: &NeuronalParams) -> [f64; 2] {
    [
        p.v_vc * p.c_x / (2.0 * p.v_vh),
        p.v_vc * p.c_xc / (2.0 * p.v_vh),
    ]
}

/// Process S of the three-process model.
pub fn homeostasis_rhs_tp(h: f64, mode: SleepMode, p: &ThreeProcessParams) -> f64 {
    if mode.is_asleep() {
        -h / p.tau_d
    } else {
        (1.0 - h) / p.tau_r
    }
}

/// Somnogen homeostat driven by the wake-active firing rate `q_m` (1/s).
pub fn homeostasis_rhs_pr(h: f64, q_m: f64, p: &NeuronalParams) -> f64 {
    (-h + p.mu_h * q_m) / p.chi
}

/// Process W: frozen during sleep, decaying while awake.
pub fn inertia_rhs(w: f64, mode: SleepMode, p: &ThreeProcessParams) -> f64 {
    -(1.0 - mode.beta()) * w / p.tau_w
}

/// Sleep propensity `Phi = H - A_c x`.
pub fn sleep_propensity(h: f64, x: f64, p: &ThreeProcessParams) -> f64 {
    h - p.a_c * x
}

pub fn three_process_rhs(
    s: &ThreeProcessState,
    i: f64,
    mode: SleepMode,
    params: &ModelParams,
) -> Result<[f64; 5]> {
    let [dx, dxc, dn] = circadian_rhs(&s.circadian, i, mode, &params.circadian)?;
    Ok([
        dx,
        dxc,
        dn,
        homeostasis_rhs_tp(s.h, mode, &params.three_process),
        inertia_rhs(s.w, mode, &params.three_process),
    ])
}

/// Derivatives of `(x, x_c, n, V_m, V_v, H)` for the full neuronal model.
///
/// Under forced wakefulness `V_m` is held at the wake-effort value, so its
/// derivative is zero and the clamp value feeds the other equations.
pub fn full_pr_rhs(
    s: &FullPrState,
    i: f64,
    mode: SleepMode,
    params: &ModelParams,
) -> Result<[f64; 6]> {
    let np = &params.neuronal;
    let [dx, dxc, dn] = circadian_rhs(&s.circadian, i, mode, &params.circadian)?;
    let vm = if mode.is_forced_wake() {
        np.v_m_forced
    } else {
        s.vm
    };
    let c = circadian_drive(s.circadian.x, s.circadian.xc, np);
    let dv = sleep_drive(c, s.h, np);
    let q_m = q_sigmoid(vm, np);
    let q_v = q_sigmoid(s.vv, np);
    let dvm = if mode.is_forced_wake() {
        0.0
    } else {
        (-vm - np.v_mv * q_v + np.a_m) / np.tau_m
    };
    let dvv = (-s.vv - np.v_vm * q_m + dv) / np.tau_v;
    Ok([dx, dxc, dn, dvm, dvv, homeostasis_rhs_pr(s.h, q_m, np)])
}

/// Alertness of the three-process model.
pub fn alertness_tp(x: f64, h: f64, w: f64, mode: SleepMode, p: &ThreeProcessParams) -> f64 {
    (1.0 - mode.beta()) * (1.0 + p.a_c * x - h - w)
}

/// Sleepiness of the three-process model, `1 - A`.
pub fn sleepiness_tp(alertness: f64) -> f64 {
    1.0 - alertness
}

/// Alertness of the neuronal models: distance of `H` below the sleep threshold.
pub fn alertness_pr(h: f64, thresholds: &ThresholdSet, mode: SleepMode) -> f64 {
    (1.0 - mode.beta()) * (thresholds.h_plus - h)
}

/// Circadian phase angle (radians) of the pacemaker state.
pub fn circadian_phase(x: f64, xc: f64) -> Result<f64> {
    if x == 0.0 && xc == 0.0 {
        return Err(Error::Domain("phase is undefined at the origin".into()));
    }
    Ok(-xc.atan2(x))
}

/// Removes 2π jumps from a sampled phase trace.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &ph in phases {
        if let Some(p) = prev {
            let d = ph - p;
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(ph + offset);
        prev = Some(ph);
    }
    out
}
