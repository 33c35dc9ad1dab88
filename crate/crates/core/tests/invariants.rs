mod common;

use alertopt::bifurcation::{filter_g, FILTER_WIDTH};
use alertopt::optimizer::{audit, evaluate, project, Problem};
use alertopt::validation::{nmse, weighted_linear_fit, DatasetSeries, ScoreLabel};
use alertopt::{LightSignal, Registry};
use proptest::prelude::*;

use common::{params, setup};

fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (3usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-50.0f64..150.0, n),
            prop::collection::vec(0.2f64..10.0, n),
        )
    })
}

/// Normal equations solved by Cramer's rule on the raw (uncentered) sums.
fn normal_equations(a: &[f64], m: &[f64], s: &[f64]) -> (f64, f64) {
    let (mut s00, mut s01, mut s11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        let w = 1.0 / (s[i] * s[i]);
        s00 += w * a[i] * a[i];
        s01 += w * a[i];
        s11 += w;
        r0 += w * a[i] * m[i];
        r1 += w * m[i];
    }
    let det = s00 * s11 - s01 * s01;
    ((r0 * s11 - s01 * r1) / det, (s00 * r1 - s01 * r0) / det)
}

fn spread(a: &[f64]) -> f64 {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn fit_matches_normal_equations((a, m, s) in series()) {
        prop_assume!(spread(&a) > 1e-2);
        let data = DatasetSeries::new(ScoreLabel::Vas, (0..a.len()).map(|k| k as f64).collect(), m.clone(), s.clone()).unwrap();
        let fit = weighted_linear_fit(&a, &data).unwrap();
        let (t1, t2) = normal_equations(&a, &m, &s);
        let tol = 1e-6 * (1.0 + t1.abs() + t2.abs());
        prop_assert!((fit.theta1 - t1).abs() < tol && (fit.theta2 - t2).abs() < tol);
        prop_assert!((fit.nmse - nmse(&a, &data, t1, t2)).abs() <= 1e-8 * (1.0 + fit.nmse));
        // No perturbation of the optimum lowers the residual.
        for (d1, d2) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            prop_assert!(nmse(&a, &data, fit.theta1 + d1, fit.theta2 + d2) >= fit.nmse);
        }
    }

    #[test]
    fn fit_is_equivariant_under_affine_rescaling((a, m, s) in series(), c in 0.1f64..10.0, d in -20.0f64..20.0) {
        prop_assume!(spread(&a) > 1e-2);
        let times: Vec<f64> = (0..a.len()).map(|k| k as f64).collect();
        let base = weighted_linear_fit(&a, &DatasetSeries::new(ScoreLabel::Vas, times.clone(), m.clone(), s.clone()).unwrap()).unwrap();
        let scaled = DatasetSeries::new(
            ScoreLabel::Vas,
            times,
            m.iter().map(|v| c * v + d).collect(),
            s.iter().map(|v| c * v).collect(),
        ).unwrap();
        let fit = weighted_linear_fit(&a, &scaled).unwrap();
        let tol = 1e-6 * (1.0 + c * (base.theta1.abs() + base.theta2.abs()) + d.abs());
        prop_assert!((fit.theta1 - c * base.theta1).abs() < tol);
        prop_assert!((fit.theta2 - (c * base.theta2 + d)).abs() < tol);
        prop_assert!((fit.nmse - base.nmse).abs() <= 1e-8 * (1.0 + base.nmse));
    }

    #[test]
    fn clamped_light_is_bounded_and_idempotent(v in prop::collection::vec(-100.0f64..20_000.0, 1..50), i_max in 1.0f64..10_000.0) {
        let light = LightSignal::new(0.0, 0.1, v.clone()).unwrap_or_else(|_| LightSignal {
            start_h: 0.0,
            grid_step_h: 0.1,
            values_lux: v.clone(),
            period_h: None,
        });
        let c = light.clamped(i_max);
        prop_assert!(c.values_lux.iter().all(|x| (0.0..=i_max).contains(x)));
        prop_assert_eq!(&c.clamped(i_max), &c);
        for (x, y) in v.iter().zip(&c.values_lux) {
            if (0.0..=i_max).contains(x) {
                prop_assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn light_lookup_matches_bin_arithmetic(v in prop::collection::vec(0.0f64..1000.0, 1..40), start in -10.0f64..10.0, step in 0.05f64..2.0, u in 0.0f64..1.0) {
        let light = LightSignal::new(start, step, v.clone()).unwrap();
        let k = ((u * v.len() as f64) as usize).min(v.len() - 1);
        let t = start + (k as f64 + 0.5) * step;
        prop_assert_eq!(light.at(t), v[k]);
        prop_assert_eq!(light.at(start - 0.5 * step), 0.0);
        prop_assert_eq!(light.at(light.end_h() + 0.5 * step), 0.0);
    }

    #[test]
    fn filter_is_nonnegative_with_compact_support(d in -1.0f64..1.0) {
        let g = filter_g(d);
        prop_assert!(g >= 0.0);
        if d <= 0.0 || d >= FILTER_WIDTH {
            prop_assert_eq!(g, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projection_is_feasible_and_idempotent(level in 5.0f64..1000.0, seed in 0u64..1000) {
        let (sc, start, init) = setup("night_shifts_naps");
        let obj = Registry::builtin().objective(&sc.objective).unwrap();
        let problem = Problem::new(params(), &sc, obj.as_ref(), start.x);
        let mut v = init.clone();
        let n = v.light.values_lux.len();
        // A bright block at a seed-dependent position, dim elsewhere.
        let at = (seed as usize * 7) % n;
        for (k, x) in v.light.values_lux.iter_mut().enumerate() {
            *x = if k >= at && k < at + 40 { level * 2.0 } else { level };
        }
        let e = evaluate(&problem, &v).unwrap();
        let once = project(&problem, &v, &e, 0.0, 0.0).unwrap();
        prop_assert!(once.variables.light.values_lux.iter().all(|x| (0.0..=problem.light_max).contains(x)));
        let e1 = evaluate(&problem, &once.variables).unwrap();
        prop_assume!(once.reverted == 0 && audit(&problem, &once.variables, &e1).is_empty());
        let twice = project(&problem, &once.variables, &e1, 0.0, 0.0).unwrap();
        prop_assert_eq!(twice.dropped, 0);
        for (a, b) in once.variables.switches.iter().zip(&twice.variables.switches) {
            prop_assert!((a.t - b.t).abs() < 1e-6, "switch moved {} -> {}", a.t, b.t);
        }
        prop_assert_eq!(once.variables.switches.len(), twice.variables.switches.len());
    }
}
