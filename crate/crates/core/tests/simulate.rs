use quickdrift::freeboundary::solve_threshold;
use quickdrift::model::{CostSpec, JumpDirection, JumpSpec, ModelSpec, PriorSpec};
use quickdrift::posterior::gsr_run;
use quickdrift::simulate::{
    estimate_risk, estimate_risk_curve, path_rng, run_threshold_rule, sample_path, sample_terminals, Dynamics,
    MonteCarlo, PathSample, Regime, Stat,
};
use quickdrift::tilt::{log_lr_increment, solve_tilt};

#[test]
fn no_jump_increments_have_diffusion_covariance() {
    let m = ModelSpec::bivariate(0.4, 0.3, 0.6, [0.0, 0.0]);
    let t = solve_tilt(&m).unwrap();
    let d = Dynamics::new(&m, &t);
    let dt = 0.1;
    let mut rng = path_rng(17, 0);
    let n = 400_000;
    let mut products = vec![Vec::with_capacity(n); 3];
    for _ in 0..n {
        let mut x = [0.0; 2];
        d.add_increment(Regime::Pre, dt, &mut rng, &mut x);
        products[0].push(x[0] * x[0]);
        products[1].push(x[1] * x[1]);
        products[2].push(x[0] * x[1]);
    }
    let g = m.gram();
    for (k, (i, j)) in [(0, 0), (1, 1), (0, 1)].into_iter().enumerate() {
        let s = Stat::from_samples(&products[k]);
        let want = g.get(i, j) * dt;
        assert!((s.mean - want).abs() < 3.0 * s.se, "({i},{j}): {} vs {want}", s.mean);
    }
}

#[test]
fn pre_change_jump_increments_are_centred() {
    let mut m = ModelSpec::bivariate(0.2, 0.2, 0.0, [0.1, 0.1]);
    m.jumps = Some(JumpSpec {
        intensity_pre: 3.0,
        jump_means_pre: vec![0.2, 0.1],
        direction: JumpDirection::Negative,
    });
    let t = solve_tilt(&m).unwrap();
    let d = Dynamics::new(&m, &t);
    let mut rng = path_rng(2, 0);
    let mut cols = vec![Vec::new(), Vec::new()];
    for _ in 0..200_000 {
        let mut x = [0.0; 2];
        d.add_increment(Regime::Pre, 0.5, &mut rng, &mut x);
        cols[0].push(x[0]);
        cols[1].push(x[1]);
    }
    for c in &cols {
        let s = Stat::from_samples(c);
        assert!(s.mean.abs() < 3.0 * s.se);
    }
}

#[test]
fn quiet_path_without_change_never_alarms() {
    let m = ModelSpec::bivariate(0.03, 0.02, 0.33, [0.03, 0.02]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.0, 0.1).unwrap();
    let path = PathSample {
        theta: f64::INFINITY,
        dt: 1.0,
        increments: vec![vec![0.0, 0.0]; 100],
        alarm: None,
    };
    let pis = gsr_run(&path.increments, &t, &p, 1.0).unwrap();
    assert!(pis.iter().all(|&pi| pi < 1.0));
    assert_eq!(run_threshold_rule(&path, &t, &p, 1.0).unwrap(), None);
}

#[test]
fn strict_threshold_alarms_after_change() {
    let m = ModelSpec::bivariate(0.3, 0.2, 0.33, [3.0, 2.0]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.1, 0.5).unwrap();
    let a = 1.0 - 1e-12;
    let after = (0..10_000u64)
        .filter(|&seed| {
            let path = sample_path(&m, &p, &t, 60.0, 0.05, seed).unwrap();
            match run_threshold_rule(&path, &t, &p, a).unwrap() {
                Some(n) => n as f64 * path.dt >= path.theta,
                None => false,
            }
        })
        .count();
    assert!(after as f64 / 10_000.0 > 0.99, "{after}");
}

#[test]
fn polynomial_functional_change_of_measure() {
    let m = ModelSpec::bivariate(0.5, 0.4, 0.3, [0.3, 0.2]);
    let t = solve_tilt(&m).unwrap();
    let phi = |x: &[f64]| (x[0] * x[1]).clamp(-1.0, 1.0);
    let n = 200_000;
    let pre = sample_terminals(&m, &t, Regime::Pre, 1.0, n, 1);
    let post = sample_terminals(&m, &t, Regime::Post, 1.0, n, 2);
    let a = Stat::from_samples(&pre.iter().map(|x| log_lr_increment(&t, x, 1.0).exp() * phi(x)).collect::<Vec<_>>());
    let b = Stat::from_samples(&post.iter().map(|x| phi(x)).collect::<Vec<_>>());
    let se = (a.se * a.se + b.se * b.se).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {}", a.mean, b.mean);
}

#[test]
fn risk_curve_is_u_shaped_around_optimum() {
    let m = ModelSpec::bivariate(0.03, 0.02, 0.33, [0.03, 0.02]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.1, 0.1).unwrap();
    let cost = CostSpec::new(0.1).unwrap();
    let a_star = solve_threshold(t.diffusion_coefficient(&m), 0.1, 0.1).unwrap().a_star;
    let grid: Vec<f64> = (2..=19).map(|k| k as f64 * 0.05).collect();
    let mc = MonteCarlo {
        n_paths: 40_000,
        seed: 8,
        ..MonteCarlo::default()
    };
    let curve = estimate_risk_curve(&m, &p, &t, &cost, &grid, &mc).unwrap();
    let (best, _) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.bayes_risk.mean.total_cmp(&b.1.bayes_risk.mean))
        .unwrap();
    assert!(best > 0 && best < grid.len() - 1);
    assert!((grid[best] - a_star).abs() <= 0.05 + 1e-9, "minimum at {}", grid[best]);
    assert!(curve[0].bayes_risk.mean > curve[best].bayes_risk.mean + 0.1);
}

#[test]
fn short_horizon_is_censored_and_flagged() {
    let m = ModelSpec::bivariate(0.03, 0.02, 0.33, [0.03, 0.02]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.1, 0.1).unwrap();
    let cost = CostSpec::new(0.1).unwrap();
    let mc = MonteCarlo {
        n_paths: 1_000,
        horizon: Some(1.0),
        ..MonteCarlo::default()
    };
    let r = estimate_risk(&m, &p, &t, &cost, 0.95, &mc).unwrap();
    assert!(r.censored > 10 && r.censoring_warning);
    assert!(r.false_alarm.mean >= 0.0 && r.false_alarm.mean <= 1.0);
}

#[test]
fn same_seed_same_path() {
    let m = ModelSpec::bivariate(0.03, 0.02, 0.33, [0.03, 0.02]);
    let t = solve_tilt(&m).unwrap();
    let p = PriorSpec::exponential(0.1, 0.1).unwrap();
    let a = sample_path(&m, &p, &t, 5.0, 0.1, 42).unwrap();
    let b = sample_path(&m, &p, &t, 5.0, 0.1, 42).unwrap();
    let c = sample_path(&m, &p, &t, 5.0, 0.1, 43).unwrap();
    assert_eq!(a.increments, b.increments);
    assert_ne!(a.increments, c.increments);
    assert_eq!(a.times().len(), 51);
}
