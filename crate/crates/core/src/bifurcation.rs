//! Equilibria of the fast MA/VLPO subsystem and the branch functions of the
//! reduced model.
//!
//! With `C` and `H` frozen, the fast pair `(V_m, V_v)` relaxes to equilibria
//! of the scalar equation
//!
//! ```text
//! r(V_m) = V_m + v_mv Q(D_v - v_vm Q(V_m)) - A_m = 0,
//! ```
//!
//! which can be inverted explicitly: every `V_m` in `(A_m - v_mv Q_max, A_m)`
//! is an equilibrium for exactly one drive
//! `D(V_m) = v_vm Q(V_m) + Q^-1((A_m - V_m) / v_mv)`. The folds of that curve
//! are the saddle nodes bounding the bistable region.

use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::q_sigmoid;
use crate::model::q_sigmoid_slope;
use crate::params::NeuronalParams;
use crate::quadrature::GaussRule;

/// Sleep-branch polynomial, `a_0..a_5`.
pub const TABLE_A: [f64; 6] = [-3.2369, -3.9232, 9.2384, -7.3438, 2.0482, -0.1964];
/// Forced-wake polynomial below the sleep threshold, `b_0..b_5`.
pub const TABLE_B: [f64; 6] = [1.1236, -0.3960, 0.8783, -1.0640, 0.5328, -0.0982];
/// Published monomial coefficients `c_0..c_11` of the transition piece. Rounded
/// to four or five significant digits they no longer describe the branch; see
/// [`BranchCoefficients::published`].
pub const PUBLISHED_C: [f64; 12] = [
    1.2155e7, -2.5973e7, 2.2560e7, -1.0007e7, 2.2781e6, -2.0589e5, -1.0268e4, 6.7223e3,
    -3.4379e3, 1.2007e3, -217.0005, 16.6128,
];
/// Transition-piece coefficients in the scaled variable `s = (D_v - 2.56) / 0.1`,
/// produced by [`fit_branches`] with default parameters.
pub const REFIT_C: [f64; 12] = [
    0.9291009425762082,
    0.443626394635144,
    -0.6027296145787324,
    0.1917653175770599,
    0.3087021520034985,
    -0.3371434927290167,
    -0.03998990432153786,
    0.2365382678463569,
    0.1338236380464999,
    -0.2791682525327846,
    -0.06361059755237207,
    0.11925060527042676,
];

/// Width of the smoothing filter support.
pub const FILTER_WIDTH: f64 = 0.2;

/// Coefficients of the sleep branch `V1` and forced-wake branch `V2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchCoefficients {
    pub a: [f64; 6],
    pub b: [f64; 6],
    pub c: [f64; 12],
    /// The transition piece is a polynomial in `(D_v - c_center) / c_scale`.
    pub c_center: f64,
    pub c_scale: f64,
    pub sigmoid_amp: f64,
    pub sigmoid_rate: f64,
    pub sigmoid_center: f64,
    pub plateau: f64,
    /// `V2` switches from the `b` piece to the `c` piece here.
    pub wake_break: f64,
    /// `V2` equals `plateau` above this drive.
    pub plateau_break: f64,
}

impl Default for BranchCoefficients {
    fn default() -> Self {
        Self {
            a: TABLE_A,
            b: TABLE_B,
            c: REFIT_C,
            c_center: 2.56,
            c_scale: 0.1,
            sigmoid_amp: 3.5702,
            sigmoid_rate: 40.0,
            sigmoid_center: 1.45,
            plateau: 1.04,
            wake_break: 2.46,
            plateau_break: 2.66,
        }
    }
}

impl BranchCoefficients {
    /// The coefficients exactly as tabulated, with the transition piece in
    /// raw monomials of `D_v`.
    pub fn published() -> Self {
        Self {
            c: PUBLISHED_C,
            c_center: 0.0,
            c_scale: 1.0,
            ..Self::default()
        }
    }

    /// Sleep-branch potential `V1(D_v)`.
    pub fn v1(&self, d: f64) -> f64 {
        self.sigmoid_amp * (-self.sigmoid_rate * (d - self.sigmoid_center)).tanh()
            + horner(&self.a, d)
    }

    pub fn v1_slope(&self, d: f64) -> f64 {
        let t = (-self.sigmoid_rate * (d - self.sigmoid_center)).tanh();
        -self.sigmoid_amp * self.sigmoid_rate * (1.0 - t * t) + horner_slope(&self.a, d)
    }

    /// Forced-wake potential `V2(D_v)`.
    pub fn v2(&self, d: f64) -> f64 {
        self.v2_on(d, self.v2_piece(d))
    }

    pub fn v2_slope(&self, d: f64) -> f64 {
        self.v2_slope_on(d, self.v2_piece(d))
    }

    /// Which piece of `V2` applies at `d`: 0 below `wake_break`, 1 up to
    /// `plateau_break`, 2 above.
    pub fn v2_piece(&self, d: f64) -> u8 {
        if d <= self.wake_break {
            0
        } else if d <= self.plateau_break {
            1
        } else {
            2
        }
    }

    /// `V2` continued from the given piece, ignoring the breakpoints.
    pub fn v2_on(&self, d: f64, piece: u8) -> f64 {
        match piece {
            0 => horner(&self.b, d),
            1 => horner(&self.c, (d - self.c_center) / self.c_scale),
            _ => self.plateau,
        }
    }

    pub fn v2_slope_on(&self, d: f64, piece: u8) -> f64 {
        match piece {
            0 => horner_slope(&self.b, d),
            1 => horner_slope(&self.c, (d - self.c_center) / self.c_scale) / self.c_scale,
            _ => 0.0,
        }
    }

    /// Jumps of `V2` at its two breakpoints.
    pub fn v2_breakpoint_gaps(&self) -> [f64; 2] {
        let c_at = |d: f64| horner(&self.c, (d - self.c_center) / self.c_scale);
        [
            (horner(&self.b, self.wake_break) - c_at(self.wake_break)).abs(),
            (c_at(self.plateau_break) - self.plateau).abs(),
        ]
    }
}

/// `V1` evaluated with the given coefficients.
pub fn eval_v1(d: f64, coeffs: &BranchCoefficients) -> f64 {
    coeffs.v1(d)
}

/// `V2` evaluated with the given coefficients.
pub fn eval_v2(d: f64, coeffs: &BranchCoefficients) -> f64 {
    coeffs.v2(d)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn horner_slope(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, c)| acc * x + i as f64 * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Wake,
    Bistable,
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub vm: f64,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub d_v: f64,
    /// Sorted by increasing `V_m`.
    pub roots: Vec<Equilibrium>,
    pub region: Region,
}

/// Residual of the fast-subsystem equilibrium equation.
pub fn residual(vm: f64, d_v: f64, p: &NeuronalParams) -> f64 {
    vm + p.v_mv * q_sigmoid(d_v - p.v_vm * q_sigmoid(vm, p), p) - p.a_m
}

/// Derivative of [`residual`] with respect to `V_m`; positive on stable roots.
pub fn residual_slope(vm: f64, d_v: f64, p: &NeuronalParams) -> f64 {
    let vv = d_v - p.v_vm * q_sigmoid(vm, p);
    1.0 - p.v_mv * p.v_vm * q_sigmoid_slope(vv, p) * q_sigmoid_slope(vm, p)
}

/// Equilibrium `V_v` paired with a given `V_m`.
pub fn vv_at_equilibrium(vm: f64, d_v: f64, p: &NeuronalParams) -> f64 {
    d_v - p.v_vm * q_sigmoid(vm, p)
}

fn q_inverse(y: f64, p: &NeuronalParams) -> f64 {
    p.theta - p.sigma * (p.q_max / y - 1.0).ln()
}

/// Drive at which `vm` is an equilibrium.
fn drive_on_curve(vm: f64, p: &NeuronalParams) -> f64 {
    p.v_vm * q_sigmoid(vm, p) + q_inverse((p.a_m - vm) / p.v_mv, p)
}

fn drive_on_curve_slope(vm: f64, p: &NeuronalParams) -> f64 {
    let y = (p.a_m - vm) / p.v_mv;
    p.v_vm * q_sigmoid_slope(vm, p) - p.sigma * p.q_max / (p.v_mv * y * (p.q_max - y))
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Fast subsystem with its folds located once.
#[derive(Debug, Clone)]
pub struct FastSubsystem {
    params: NeuronalParams,
    /// Admissible open interval of `V_m`.
    vm_min: f64,
    vm_max: f64,
    /// `V_m` at the lower and upper folds.
    fold_vm: Option<(f64, f64)>,
    saddle_nodes: Option<(f64, f64)>,
}

impl FastSubsystem {
    pub fn new(params: &NeuronalParams) -> Result<Self> {
        params.validate()?;
        let vm_min = params.a_m - params.v_mv * params.q_max;
        let vm_max = params.a_m;
        let n = 40_000;
        let span = vm_max - vm_min;
        let mut folds = Vec::new();
        let mut prev_v = vm_min + span * 0.5 / n as f64;
        let mut prev_s = drive_on_curve_slope(prev_v, params);
        for k in 1..n {
            let v = vm_min + span * (k as f64 + 0.5) / n as f64;
            let s = drive_on_curve_slope(v, params);
            if (s > 0.0) != (prev_s > 0.0) {
                folds.push(bisect(prev_v, v, |u| drive_on_curve_slope(u, params)));
            }
            prev_v = v;
            prev_s = s;
        }
        let (fold_vm, saddle_nodes) = match folds.as_slice() {
            [] => (None, None),
            [lo, hi] => {
                let d_lo = drive_on_curve(*lo, params);
                let d_hi = drive_on_curve(*hi, params);
                (Some((*lo, *hi)), Some((d_lo.min(d_hi), d_lo.max(d_hi))))
            }
            other => {
                return Err(Error::Domain(format!(
                    "equilibrium curve has {} folds; expected 0 or 2",
                    other.len()
                )))
            }
        };
        Ok(Self {
            params: *params,
            vm_min,
            vm_max,
            fold_vm,
            saddle_nodes,
        })
    }

    pub fn params(&self) -> &NeuronalParams {
        &self.params
    }

    /// Boundaries `(D_low, D_high)` of the bistable region.
    pub fn saddle_nodes(&self) -> Result<(f64, f64)> {
        self.saddle_nodes
            .ok_or_else(|| Error::Domain("no bistable region for these parameters".into()))
    }

    fn root_in(&self, lo: f64, hi: f64, d_v: f64) -> f64 {
        let p = &self.params;
        let v = bisect(lo, hi, |u| residual(u, d_v, p));
        v
    }

    /// Stable low-`V_m` root, if it exists at this drive.
    pub fn sleep_root(&self, d_v: f64) -> Option<f64> {
        match (self.fold_vm, self.saddle_nodes) {
            (Some((va, _)), Some((d_low, _))) => {
                (d_v >= d_low).then(|| self.root_in(self.vm_min, va, d_v))
            }
            _ => Some(self.root_in(self.vm_min, self.vm_max, d_v)),
        }
    }

    /// Stable high-`V_m` root, if it exists at this drive.
    pub fn wake_root(&self, d_v: f64) -> Option<f64> {
        match (self.fold_vm, self.saddle_nodes) {
            (Some((_, vb)), Some((_, d_high))) => {
                (d_v <= d_high).then(|| self.root_in(vb, self.vm_max, d_v))
            }
            _ => Some(self.root_in(self.vm_min, self.vm_max, d_v)),
        }
    }

    pub fn equilibria(&self, d_v: f64) -> EquilibriumSet {
        let p = &self.params;
        let mut roots = Vec::with_capacity(3);
        match (self.fold_vm, self.saddle_nodes) {
            (Some((va, vb)), Some((d_low, d_high))) => {
                if d_v >= d_low {
                    roots.push(self.root_in(self.vm_min, va, d_v));
                }
                if d_v > d_low && d_v < d_high {
                    roots.push(self.root_in(va, vb, d_v));
                }
                if d_v <= d_high {
                    roots.push(self.root_in(vb, self.vm_max, d_v));
                }
            }
            _ => roots.push(self.root_in(self.vm_min, self.vm_max, d_v)),
        }
        let roots: Vec<Equilibrium> = roots
            .into_iter()
            .map(|vm| Equilibrium {
                vm,
                stability: if residual_slope(vm, d_v, p) > 0.0 {
                    Stability::Stable
                } else {
                    Stability::Unstable
                },
            })
            .collect();
        let region = if roots.len() >= 3 {
            Region::Bistable
        } else if roots[0].vm > p.v_m_th {
            Region::Wake
        } else {
            Region::Sleep
        };
        EquilibriumSet { d_v, roots, region }
    }

    /// Wake root below the upper saddle node, plateau above it.
    pub fn forced_wake_raw(&self, d_v: f64) -> f64 {
        self.wake_root(d_v).unwrap_or(self.params.v_m_forced)
    }

    /// Raw forced-wake branch convolved with [`filter_g`].
    pub fn forced_wake_smoothed(&self, d_v: f64) -> f64 {
        thread_local! {
            static RULE: GaussRule = GaussRule::new(24);
        }
        let plateau = self.params.v_m_forced;
        let Some((_, d_high)) = self.saddle_nodes else {
            return RULE.with(|r| r.integrate(0.0, FILTER_WIDTH, 2, |s| {
                self.forced_wake_raw(d_v - s) * filter_g(s)
            }));
        };
        // For s < d_v - d_high the argument lies above the fold: plateau.
        let s_fold = d_v - d_high;
        let s_lo = s_fold.clamp(0.0, FILTER_WIDTH);
        RULE.with(|rule| {
            let plateau_part = plateau * rule.integrate(0.0, s_lo, 1, filter_g);
            if s_lo >= FILTER_WIDTH {
                return plateau_part;
            }
            // s = s_fold + w^2 removes the square-root behaviour at the fold.
            let w_lo = (s_lo - s_fold).max(0.0).sqrt();
            let w_hi = (FILTER_WIDTH - s_fold).sqrt();
            let branch_part = rule.integrate(w_lo, w_hi, 4, |w| {
                let s = s_fold + w * w;
                let v = self.wake_root(d_high - w * w).unwrap_or(plateau);
                v * filter_g(s) * 2.0 * w
            });
            plateau_part + branch_part
        })
    }
}

/// All equilibria of the fast subsystem at drive `d_v`.
pub fn vm_equilibria(d_v: f64, params: &NeuronalParams) -> Result<EquilibriumSet> {
    Ok(FastSubsystem::new(params)?.equilibria(d_v))
}

/// Boundaries `(D_low, D_high)` of the bistable region.
pub fn find_saddle_nodes(params: &NeuronalParams) -> Result<(f64, f64)> {
    FastSubsystem::new(params)?.saddle_nodes()
}

/// Smoothing kernel supported on `(0, 0.2)` with unit mass.
pub fn filter_g(d: f64) -> f64 {
    if d > 0.0 && d < FILTER_WIDTH {
        let r = FILTER_WIDTH - d;
        468_750.0 * d * r * r * r * r
    } else {
        0.0
    }
}

/// Result of refitting the branch polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFit {
    pub coefficients: BranchCoefficients,
    /// Condition numbers of the `a`, `b` and `c` design matrices.
    pub condition: [f64; 3],
    /// Maximum absolute residual of each fit (mV).
    pub max_residual: [f64; 3],
}

/// Ranges and spacings used by [`fit_branches`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGrid {
    pub sleep_hi: f64,
    pub sleep_step: f64,
    pub wake_lo: f64,
    pub wake_step: f64,
    pub transition_step: f64,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            sleep_hi: 3.5,
            sleep_step: 1e-3,
            wake_lo: 0.0,
            wake_step: 1e-3,
            transition_step: 1e-4,
        }
    }
}

const CONDITION_WARNING: f64 = 1e10;

fn polyfit(xs: &[f64], ys: &[f64], degree: usize, label: &str) -> Result<(Vec<f64>, f64, f64)> {
    let m = xs.len();
    if m <= degree {
        return Err(Error::DegenerateFit(format!(
            "{label}: {m} samples for degree {degree}"
        )));
    }
    let design = DMatrix::from_fn(m, degree + 1, |i, j| xs[i].powi(j as i32));
    let rhs = DVector::from_column_slice(ys);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > CONDITION_WARNING {
        warn!("{label} fit is ill-conditioned (condition number {condition:.3e})");
    }
    let coeffs = svd
        .solve(&rhs, f64::EPSILON * smax)
        .map_err(|e| Error::DegenerateFit(format!("{label}: {e}")))?;
    let fitted = &design * &coeffs;
    let max_residual = (fitted - rhs).amax();
    Ok((coeffs.iter().copied().collect(), condition, max_residual))
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// Least-squares refit of all three branch polynomials from the fast subsystem.
pub fn fit_branches(params: &NeuronalParams, fit_grid: &FitGrid) -> Result<BranchFit> {
    let fast = FastSubsystem::new(params)?;
    let (d_low, _) = fast.saddle_nodes()?;
    let base = BranchCoefficients::default();

    let ds = grid(d_low, fit_grid.sleep_hi, fit_grid.sleep_step);
    let ys: Vec<f64> = ds
        .iter()
        .map(|&d| {
            let root = fast.sleep_root(d).unwrap_or(f64::NAN);
            root - base.sigmoid_amp * (-base.sigmoid_rate * (d - base.sigmoid_center)).tanh()
        })
        .collect();
    let (a, cond_a, res_a) = polyfit(&ds, &ys, 5, "sleep branch")?;

    let ds = grid(fit_grid.wake_lo, base.wake_break, fit_grid.wake_step);
    let ys: Vec<f64> = ds.iter().map(|&d| fast.forced_wake_smoothed(d)).collect();
    let (b, cond_b, res_b) = polyfit(&ds, &ys, 5, "forced-wake branch")?;

    let ds: Vec<f64> = grid(base.wake_break, base.plateau_break, fit_grid.transition_step);
    let ys: Vec<f64> = ds.iter().map(|&d| fast.forced_wake_smoothed(d)).collect();
    let ss: Vec<f64> = ds.iter().map(|d| (d - base.c_center) / base.c_scale).collect();
    let (c, cond_c, res_c) = polyfit(&ss, &ys, 11, "transition piece")?;

    let mut coefficients = base;
    coefficients.a.copy_from_slice(&a);
    coefficients.b.copy_from_slice(&b);
    coefficients.c.copy_from_slice(&c);
    Ok(BranchFit {
        coefficients,
        condition: [cond_a, cond_b, cond_c],
        max_residual: [res_a, res_b, res_c],
    })
}

/// One row of the branch table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    #[serde(rename = "D_v")]
    pub d_v: f64,
    #[serde(rename = "V_sleep")]
    pub v_sleep: Option<f64>,
    #[serde(rename = "V_wake_raw")]
    pub v_wake_raw: f64,
    #[serde(rename = "V_wake_smoothed")]
    pub v_wake_smoothed: f64,
    #[serde(rename = "V1_fit")]
    pub v1_fit: f64,
    #[serde(rename = "V2_fit")]
    pub v2_fit: f64,
}

pub fn branch_table(
    fast: &FastSubsystem,
    coeffs: &BranchCoefficients,
    d_values: &[f64],
) -> Vec<BranchRow> {
    d_values
        .iter()
        .map(|&d| BranchRow {
            d_v: d,
            v_sleep: fast.sleep_root(d),
            v_wake_raw: fast.forced_wake_raw(d),
            v_wake_smoothed: fast.forced_wake_smoothed(d),
            v1_fit: coeffs.v1(d),
            v2_fit: coeffs.v2(d),
        })
        .collect()
}

pub fn write_branch_csv(path: &Path, rows: &[BranchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
