//! Hybrid-model right-hand side with its analytic derivatives.

use std::f64::consts::PI;

use crate::model::{circadian_drive, q_sigmoid, q_sigmoid_slope, sleep_drive, threshold_gradient, thresholds};
use crate::params::ModelParams;

/// State order `(x, x_c, n, H)`.
pub type State = [f64; 4];
pub type Jacobian = [[f64; 4]; 4];

/// Light-dependent factors of the pacemaker: `alpha` and `d alpha / d n`.
fn light_terms(params: &ModelParams, lux: f64, n: f64, asleep: bool) -> (f64, f64) {
    let cp = &params.circadian;
    if asleep || lux <= 0.0 {
        return (0.0, 0.0);
    }
    let s = cp.alpha_0 * (lux / cp.i0).powf(cp.p);
    (s * (1.0 - n), -s)
}

fn branch(params: &ModelParams, d: f64, asleep: bool, piece: u8) -> (f64, f64) {
    let b = &params.branches;
    if asleep {
        (b.v1(d), b.v1_slope(d))
    } else {
        (b.v2_on(d, piece), b.v2_slope_on(d, piece))
    }
}

/// Piece of the branch function in use at `x`; 0 while asleep.
pub fn piece(params: &ModelParams, x: &State, asleep: bool) -> u8 {
    if asleep {
        return 0;
    }
    let np = &params.neuronal;
    params
        .branches
        .v2_piece(sleep_drive(circadian_drive(x[0], x[1], np), x[3], np))
}

pub fn rhs(params: &ModelParams, x: &State, lux: f64, asleep: bool) -> State {
    rhs_on(params, x, lux, asleep, piece(params, x, asleep))
}

/// [`rhs`] with the forced-wake branch held on `piece`.
pub fn rhs_on(params: &ModelParams, x: &State, lux: f64, asleep: bool, piece: u8) -> State {
    let cp = &params.circadian;
    let np = &params.neuronal;
    let (alpha, _) = light_terms(params, lux, x[2], asleep);
    let u = cp.g * alpha;
    let (px, pxc) = (x[0], x[1]);
    let gate = (1.0 - 0.4 * px) * (1.0 - cp.k_c * pxc) * u;
    let x3 = px * px * px;
    let x7 = x3 * x3 * px;
    let d = sleep_drive(circadian_drive(px, pxc, np), x[3], np);
    let (vm, _) = branch(params, d, asleep, piece);
    [
        PI / 12.0 * (pxc + cp.mu * (px / 3.0 + 4.0 / 3.0 * x3 - 256.0 / 105.0 * x7) + gate),
        PI / 12.0 * (-cp.omega_sq() * px + (cp.q * pxc - cp.k * px) * gate),
        60.0 * (alpha - cp.gamma * x[2]),
        (-x[3] + np.mu_h * q_sigmoid(vm, np)) / np.chi,
    ]
}

/// `J[i][j] = d rhs_i / d x_j`.
pub fn jacobian(params: &ModelParams, x: &State, lux: f64, asleep: bool) -> Jacobian {
    jacobian_on(params, x, lux, asleep, piece(params, x, asleep))
}

pub fn jacobian_on(params: &ModelParams, x: &State, lux: f64, asleep: bool, piece: u8) -> Jacobian {
    let cp = &params.circadian;
    let np = &params.neuronal;
    let (alpha, dalpha_dn) = light_terms(params, lux, x[2], asleep);
    let u = cp.g * alpha;
    let du_dn = cp.g * dalpha_dn;
    let (px, pxc) = (x[0], x[1]);
    let a = 1.0 - 0.4 * px;
    let b = 1.0 - cp.k_c * pxc;
    let gate = a * b * u;
    let r = cp.q * pxc - cp.k * px;
    let k = PI / 12.0;
    let mut j = [[0.0; 4]; 4];

    j[0][0] = k * (cp.mu * (1.0 / 3.0 + 4.0 * px * px - 256.0 / 15.0 * px.powi(6)) - 0.4 * b * u);
    j[0][1] = k * (1.0 - cp.k_c * a * u);
    j[0][2] = k * a * b * du_dn;

    j[1][0] = k * (-cp.omega_sq() - cp.k * gate - 0.4 * r * b * u);
    j[1][1] = k * (cp.q * gate - cp.k_c * r * a * u);
    j[1][2] = k * r * a * b * du_dn;

    j[2][2] = 60.0 * (dalpha_dn - cp.gamma);

    let d = sleep_drive(circadian_drive(px, pxc, np), x[3], np);
    let (vm, dvm) = branch(params, d, asleep, piece);
    let s = np.mu_h * q_sigmoid_slope(vm, np) * dvm / np.chi;
    j[3][0] = -s * np.v_vc * np.c_x / 2.0;
    j[3][1] = -s * np.v_vc * np.c_xc / 2.0;
    j[3][3] = -1.0 / np.chi + s * np.v_vh;
    j
}

/// `d rhs / d I`, with the light floored at `eps` where the power law is singular.
pub fn light_sensitivity(params: &ModelParams, x: &State, lux: f64, asleep: bool, eps: f64) -> State {
    let cp = &params.circadian;
    if asleep {
        return [0.0; 4];
    }
    let i = lux.max(eps);
    let dalpha = cp.alpha_0 * cp.p / cp.i0 * (i / cp.i0).powf(cp.p - 1.0) * (1.0 - x[2]);
    let du = cp.g * dalpha;
    let a = 1.0 - 0.4 * x[0];
    let b = 1.0 - cp.k_c * x[1];
    let r = cp.q * x[1] - cp.k * x[0];
    [
        PI / 12.0 * a * b * du,
        PI / 12.0 * r * a * b * du,
        60.0 * dalpha,
        0.0,
    ]
}

/// Running cost `-w (H+ - H)`.
pub fn running_cost(params: &ModelParams, x: &State, weight: f64) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    let np = &params.neuronal;
    let th = thresholds(circadian_drive(x[0], x[1], np), np);
    -weight * (th.h_plus - x[3])
}

/// Gradient of [`running_cost`]; independent of the state.
pub fn running_cost_gradient(params: &ModelParams, weight: f64) -> State {
    let [gx, gxc] = threshold_gradient(&params.neuronal);
    [-weight * gx, -weight * gxc, 0.0, weight]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{HybridModel, SwitchedModel};
    use crate::model::SleepMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> State {
        [
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(0.0..0.9),
            rng.gen_range(10.0..16.0),
        ]
    }

    #[test]
    fn rhs_matches_simulator_model() {
        let p = ModelParams::default();
        let model = HybridModel { params: &p };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_state(&mut rng);
            for asleep in [false, true] {
                let a = rhs(&p, &x, 120.0, asleep);
                let b = model.rhs(&x, 120.0, SleepMode::from_beta(asleep)).unwrap();
                for i in 0..4 {
                    assert!((a[i] - b[i]).abs() < 1e-12 * (1.0 + b[i].abs()));
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..50 {
            let x = random_state(&mut rng);
            let lux = rng.gen_range(1.0..150.0);
            let asleep = case % 2 == 1;
            let jac = jacobian(&p, &x, lux, asleep);
            for col in 0..4 {
                let e = 1e-6 * x[col].abs().max(1.0);
                let (mut xp, mut xm) = (x, x);
                xp[col] += e;
                xm[col] -= e;
                let (fp, fm) = (rhs(&p, &xp, lux, asleep), rhs(&p, &xm, lux, asleep));
                for row in 0..4 {
                    let fd = (fp[row] - fm[row]) / (2.0 * e);
                    let scale = fd.abs().max(jac[row][col].abs()).max(1e-3);
                    assert!(
                        (fd - jac[row][col]).abs() / scale < 1e-6,
                        "case {case} J[{row}][{col}] = {} vs {fd}",
                        jac[row][col]
                    );
                }
            }
            let di = light_sensitivity(&p, &x, lux, asleep, 1e-3);
            let e = 1e-4;
            let (fp, fm) = (rhs(&p, &x, lux + e, asleep), rhs(&p, &x, lux - e, asleep));
            for row in 0..4 {
                let fd = (fp[row] - fm[row]) / (2.0 * e);
                assert!((fd - di[row]).abs() <= 1e-6 * fd.abs().max(1e-6), "dI row {row}");
            }
        }
    }

    #[test]
    fn sleep_blocks_light() {
        let p = ModelParams::default();
        let x = [0.3, -0.2, 0.4, 12.0];
        assert_eq!(light_sensitivity(&p, &x, 100.0, true, 1e-3), [0.0; 4]);
        assert_eq!(rhs(&p, &x, 100.0, true)[..3], rhs(&p, &x, 0.0, true)[..3]);
    }

    #[test]
    fn cost_gradient_matches_differences() {
        let p = ModelParams::default();
        let x = [0.4, -0.7, 0.2, 13.0];
        let g = running_cost_gradient(&p, 1.0);
        for i in 0..4 {
            let (mut xp, mut xm) = (x, x);
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (running_cost(&p, &xp, 1.0) - running_cost(&p, &xm, 1.0)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
