use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use quickdrift::freeboundary::{integral_reduction, jump_generator_assemble, solve_threshold, y_eval, Side};
use quickdrift::model::{JumpDirection, JumpSpec, ModelSpec};
use quickdrift::posterior::SmoothFn;
use quickdrift::quadrature::Quadrature;
use quickdrift::simulate::Stat;
use quickdrift::tilt::solve_tilt;

fn jump_model(direction: JumpDirection) -> ModelSpec<f64> {
    let mut m = ModelSpec::new(2, vec![0.4, 0.0, 0.1, 0.3], vec![0.3, 0.2], None).unwrap();
    m.jumps = Some(JumpSpec {
        intensity_pre: 2.0,
        jump_means_pre: vec![0.2, 0.3],
        direction,
    });
    m
}

/// Generator with the jump expectations taken as 2-D integrals over the
/// jump sizes themselves.
fn brute_force_generator(
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64) -> f64,
    d2f: &dyn Fn(f64) -> f64,
    x: f64,
    model: &ModelSpec<f64>,
    lambda: f64,
) -> f64 {
    let tilt = solve_tilt(model).unwrap();
    let pre = model.jumps.as_ref().unwrap();
    let post = tilt.post_jumps.as_ref().unwrap();
    let sign = pre.direction.sign::<f64>();
    let quad = Quadrature::with_tolerance(1e-11, 1e-14);
    let expect = |means: &[f64]| {
        let (m1, m2) = (means[0], means[1]);
        let u1 = 30.0 * m1;
        let u2 = 30.0 * m2;
        let phi = |y1: f64, y2: f64| {
            let s = sign * (tilt.z[0] * y1 + tilt.z[1] * y2);
            1.0 / (1.0 + (-((x / (1.0 - x)).ln() + s)).exp())
        };
        quad.integrate(
            |y1| {
                quad.integrate(|y2| f(phi(y1, y2)) * (-y2 / m2).exp() / m2, 0.0, u2)
                    .unwrap()
                    .value
                    * (-y1 / m1).exp()
                    / m1
            },
            0.0,
            u1,
        )
        .unwrap()
        .value
    };
    let (mu_inf, mu_0) = (pre.intensity_pre, post.intensity_post);
    let b = tilt.diffusion_coefficient(model);
    let s = x * (1.0 - x);
    (1.0 - x) * mu_inf * expect(&pre.jump_means_pre) + x * mu_0 * expect(&post.jump_means_post) - f(x)
        + df(x) * (lambda * (1.0 - x) + s * (mu_inf - mu_0))
        + 0.5 * d2f(x) * s * s * b
}

#[test]
fn jump_generator_matches_brute_force() {
    let f = |v: f64| (2.0 * v).sin() + v * v * v;
    let df = |v: f64| 2.0 * (2.0 * v).cos() + 3.0 * v * v;
    let d2f = |v: f64| -4.0 * (2.0 * v).sin() + 6.0 * v;
    for direction in [JumpDirection::Positive, JumpDirection::Negative] {
        let model = jump_model(direction);
        let tilt = solve_tilt(&model).unwrap();
        for x in [0.3, 0.6] {
            let closed = jump_generator_assemble(SmoothFn::new(&f, &df, &d2f), x, &model, &tilt, 0.1).unwrap();
            let brute = brute_force_generator(&f, &df, &d2f, x, &model, 0.1);
            assert!((closed - brute).abs() < 1e-5, "{direction:?} x = {x}: {closed} vs {brute}");
        }
    }
}

#[test]
fn three_rate_reduction_matches_monte_carlo() {
    let f = |v: f64| v * v;
    let df = |v: f64| 2.0 * v;
    let zero = |_: f64| 0.0;
    let rates = [1.5, 2.5, 4.0];
    let x = 0.35;
    let closed = integral_reduction(SmoothFn::new(&f, &df, &zero), x, &rates, Side::Plus).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exps: Vec<Exp<f64>> = rates.iter().map(|&b| Exp::new(b).unwrap()).collect();
    let draws: Vec<f64> = (0..400_000)
        .map(|_| {
            let s: f64 = exps.iter().map(|e| e.sample(&mut rng)).sum();
            f(x * s.exp() / (x * (s.exp() - 1.0) + 1.0))
        })
        .collect();
    let mc = Stat::from_samples(&draws);
    assert!((mc.mean - closed).abs() < 3.0 * mc.se, "{} ± {} vs {closed}", mc.mean, mc.se);
}

#[test]
fn y_is_negative_nonincreasing_with_single_crossing() {
    for &b in &[0.5, 1.5, 4.0] {
        for &lambda in &[0.05, 0.5] {
            for &c in &[0.05, 1.0] {
                let sol = solve_threshold(b, lambda, c).unwrap();
                let mut prev = 0.0;
                let mut crossings = 0;
                for k in 1..1000 {
                    let s = k as f64 / 1000.0;
                    let y = y_eval(s, b, lambda, c).unwrap();
                    assert!(y < 0.0 && y <= prev + 1e-12, "B={b} λ={lambda} c={c} s={s}");
                    if (prev + 1.0 > 0.0) != (y + 1.0 > 0.0) {
                        crossings += 1;
                    }
                    prev = y;
                }
                assert!(crossings <= 1);
                assert_eq!(crossings == 1, !sol.no_root || sol.a_star < 0.999);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn threshold_is_scale_invariant(b in 0.2f64..5.0, lambda in 0.02f64..1.0, c in 0.02f64..2.0, kappa in 0.1f64..10.0) {
        let a = solve_threshold(b, lambda, c).unwrap();
        let k = solve_threshold(kappa * b, kappa * lambda, kappa * c).unwrap();
        prop_assert!((a.a_star - k.a_star).abs() < 1e-6);
    }

    #[test]
    fn value_function_invariants(b in 0.2f64..5.0, lambda in 0.02f64..1.0, c in 0.02f64..2.0) {
        let sol = solve_threshold(b, lambda, c).unwrap();
        prop_assert!(sol.smooth_fit_residual().unwrap().abs() < 1e-8);
        prop_assert_eq!(sol.value(sol.a_star), 1.0 - sol.a_star);
        let curve = sol.value_curve(500);
        for w in curve.windows(3) {
            let (x, v) = w[1];
            prop_assert!(v <= 1.0 - x + 1e-12);
            prop_assert!(w[2].1 <= v + 1e-12);
            prop_assert!(w[0].1 - 2.0 * v + w[2].1 <= 1e-6);
        }
        prop_assert!(y_eval(1e-4, b, lambda, c).unwrap().abs() < 1e-3 || c / lambda > 5.0);
    }
}
