use proptest::prelude::*;

use quickdrift::calibrate::{calibrate, residual_series, MortalitySeries};
use quickdrift::model::{JumpDirection, JumpSpec, ModelSpec, PriorSpec};
use quickdrift::posterior::{gsr_oracle_dt, gsr_run, LOG_SWITCH};
use quickdrift::tilt::{reconstruct_drift, solve_tilt};

fn lower_triangular(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5f64..0.5, d * d).prop_map(move |mut v| {
        for i in 0..d {
            for j in 0..d {
                if j > i {
                    v[i * d + j] = 0.0;
                } else if i == j {
                    v[i * d + j] = 0.2 + v[i * d + j].abs();
                }
            }
        }
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tilt_reproduces_drift(sigma in lower_triangular(3), r in prop::collection::vec(-1.0f64..1.0, 3)) {
        let m = ModelSpec::new(3, sigma, r.clone(), None).unwrap();
        let t = solve_tilt(&m).unwrap();
        for (a, b) in reconstruct_drift(&m, &t).iter().zip(&r) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn jump_tilt_reproduces_drift(
        sigma in lower_triangular(2),
        r in prop::collection::vec(0.0f64..0.5, 2),
        mu in 0.1f64..3.0,
        w in prop::collection::vec(0.05f64..0.4, 2),
    ) {
        let mut m = ModelSpec::new(2, sigma, r.clone(), None).unwrap();
        m.jumps = Some(JumpSpec { intensity_pre: mu, jump_means_pre: w, direction: JumpDirection::Positive });
        if let Ok(t) = solve_tilt(&m) {
            for (a, b) in reconstruct_drift(&m, &t).iter().zip(&r) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn posterior_stays_in_unit_interval(
        incs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..200),
        x0 in 0.0f64..0.9,
        lambda in 0.01f64..2.0,
    ) {
        let m = ModelSpec::bivariate(0.5, 0.4, 0.2, [2.0, 1.0]);
        let t = solve_tilt(&m).unwrap();
        let p = PriorSpec::exponential(x0, lambda).unwrap();
        for pi in gsr_run(&incs, &t, &p, 1.0).unwrap() {
            prop_assert!((0.0..=1.0).contains(&pi));
        }
    }

    #[test]
    fn recursion_matches_direct_sum(
        incs in prop::collection::vec(prop::collection::vec(-0.5f64..0.5, 2), 1..20),
        x0 in 0.0f64..0.9,
        dt in 0.05f64..1.0,
    ) {
        let m = ModelSpec::bivariate(0.6, 0.5, -0.3, [0.4, 0.3]);
        let t = solve_tilt(&m).unwrap();
        let p = PriorSpec::exponential(x0, 0.3).unwrap();
        let a = gsr_run(&incs, &t, &p, dt).unwrap();
        let b = gsr_oracle_dt(&incs, &t, &p, dt);
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_increments_have_zero_mean(
        noise in prop::collection::vec(prop::collection::vec(-0.05f64..0.05, 2), 4..40),
    ) {
        let years: Vec<i32> = (1950..).take(noise.len()).collect();
        let mu = noise
            .iter()
            .enumerate()
            .map(|(i, e)| [(-4.0 - 0.01 * i as f64 + e[0]).exp(), (-4.4 - 0.02 * i as f64 + e[1]).exp()])
            .collect();
        let s = MortalitySeries::new(years.clone(), mu).unwrap();
        let Ok(r) = calibrate(&s, (years[0], *years.last().unwrap())) else { return Ok(()) };
        let x = residual_series(&s, &r);
        prop_assert_eq!(x[0], [0.0, 0.0]);
        for k in 0..2 {
            let mean = x.windows(2).map(|w| w[1][k] - w[0][k]).sum::<f64>() / (x.len() - 1) as f64;
            prop_assert!(mean.abs() < 1e-12);
        }
        prop_assert!(r.rho.abs() <= 1.0 && r.sigma1 > 0.0 && r.sigma2 > 0.0);
    }
}

#[test]
fn statistic_survives_overflow_range() {
    let m = ModelSpec::bivariate(0.03, 0.02, 0.33, [0.03, 0.02]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.1, 0.1).unwrap();
    // strong post-change evidence: ψ passes 1e100 and keeps growing
    let incs = vec![vec![0.3, 0.2]; 400];
    let pis = gsr_run(&incs, &t, &p, 1.0).unwrap();
    assert!(pis.iter().all(|p: &f64| p.is_finite()));
    assert_eq!(*pis.last().unwrap(), 1.0);
    let mut s = quickdrift::posterior::gsr_init(&p);
    for dx in &incs {
        s = quickdrift::posterior::gsr_step(&s, &t, dx, &p).unwrap();
    }
    assert!(s.psi.ln() > LOG_SWITCH.ln());
}
