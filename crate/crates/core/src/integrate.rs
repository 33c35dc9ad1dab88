//! Explicit Runge-Kutta steps on fixed-size state arrays.

use crate::error::Result;

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * k[i];
    }
    out
}

/// One classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step<const N: usize, F>(f: &mut F, t: f64, x: &[f64; N], h: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(x, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(x, h, &k3))?;
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand-Prince step: fifth-order solution and the embedded error estimate.
pub fn dopri_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    x: &[f64; N],
    h: f64,
) -> Result<([f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k1 = f(t, x)?;
    let mut y = [0.0; N];
    for i in 0..N {
        y[i] = x[i] + h * A21 * k1[i];
    }
    let k2 = f(t + C2 * h, &y)?;
    for i in 0..N {
        y[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = f(t + C3 * h, &y)?;
    for i in 0..N {
        y[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(t + C4 * h, &y)?;
    for i in 0..N {
        y[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(t + C5 * h, &y)?;
    for i in 0..N {
        y[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(t + h, &y)?;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
    }
    let k7 = f(t + h, &out)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok((out, err))
}

/// Scaled error norm of a step; accept when it is at most one.
pub fn error_norm<const N: usize>(
    x: &[f64; N],
    y: &[f64; N],
    err: &[f64; N],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..N {
        let scale = abs_tol + rel_tol * x[i].abs().max(y[i].abs());
        worst = worst.max((err[i] / scale).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn decay(_t: f64, x: &[f64; 1]) -> Result<[f64; 1]> {
        Ok([-x[0]])
    }

    #[test]
    fn rk4_is_fourth_order() {
        let run = |h: f64| {
            let mut x = [1.0];
            let n = (1.0 / h).round() as usize;
            for k in 0..n {
                x = rk4_step(&mut decay, k as f64 * h, &x, h).unwrap();
            }
            (x[0] - (-1f64).exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_matches_exponential() {
        let (y, err) = dopri_step(&mut decay, 0.0, &[1.0], 0.1).unwrap();
        assert_relative_eq!(y[0], (-0.1f64).exp(), epsilon = 1e-9);
        assert!(err[0].abs() < 1e-8);
        assert!(error_norm(&[1.0], &y, &err, 1e-8, 1e-6) < 1.0);
    }
}
