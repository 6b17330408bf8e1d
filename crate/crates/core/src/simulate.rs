//! Monte Carlo engine for the disorder model.
//!
//! Each path owns a ChaCha8 stream keyed by (master seed, path index), and
//! per-path results are reduced in index order, so estimates do not depend
//! on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{CostSpec, ModelSpec, PriorSpec};
use crate::posterior::{gsr_init, gsr_step_dt, Psi};
use crate::scalar::KahanSum;
use crate::tilt::TiltSolution;

/// Default step for risk studies.
pub const DEFAULT_DT: f64 = 1.0 / 50.0;
/// Share of censored paths above which estimates are flagged.
pub const CENSORING_WARNING: f64 = 0.01;
pub const MIN_PATHS: usize = 100;

/// RNG for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Pre,
    Post,
}

/// Increment laws of both regimes.
#[derive(Clone, Debug)]
pub struct Dynamics {
    sigma: Matrix<f64>,
    drift: [Vec<f64>; 2],
    intensity: [f64; 2],
    jump_means: [Vec<f64>; 2],
}

impl Dynamics {
    pub fn new(model: &ModelSpec<f64>, tilt: &TiltSolution<f64>) -> Self {
        let d = model.dim();
        let (mut drift_pre, mut drift_post) = (vec![0.0; d], model.drift_r.clone());
        let (mut intensity, mut jump_means) = ([0.0; 2], [vec![0.0; d], vec![0.0; d]]);
        if let (Some(pre), Some(post)) = (&model.jumps, &tilt.post_jumps) {
            let (m_pre, m_post) = (pre.signed_means(), post.signed_means());
            for k in 0..d {
                drift_pre[k] = -pre.intensity_pre * m_pre[k];
                drift_post[k] -= post.intensity_post * m_post[k];
            }
            intensity = [pre.intensity_pre, post.intensity_post];
            jump_means = [m_pre, m_post];
        }
        Self {
            sigma: model.sigma.clone(),
            drift: [drift_pre, drift_post],
            intensity,
            jump_means,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Adds an increment of length `h` under `regime` to `out`.
    pub fn add_increment<R: Rng>(&self, regime: Regime, h: f64, rng: &mut R, out: &mut [f64]) {
        if h <= 0.0 {
            return;
        }
        let r = regime as usize;
        let d = self.dim();
        let sd = h.sqrt();
        let xi: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * sd).collect();
        let gauss = self.sigma.mul_vec(&xi);
        for k in 0..d {
            out[k] += self.drift[r][k] * h + gauss[k];
        }
        let rate = self.intensity[r] * h;
        if rate > 0.0 {
            let count = Poisson::new(rate).expect("positive Poisson mean").sample(rng) as u64;
            for _ in 0..count {
                for (o, &m) in out.iter_mut().zip(&self.jump_means[r]) {
                    *o += m * rng.sample::<f64, _>(Exp1);
                }
            }
        }
    }
}

/// Draws θ from the 0-modified prior (+∞ past a partial table).
pub fn sample_theta<R: Rng>(prior: &PriorSpec<f64>, rng: &mut R) -> f64 {
    prior.quantile(rng.random::<f64>())
}

/// Generates increments on the grid t_n = n·dt, splitting the step that
/// contains θ.
pub struct PathStepper<'a> {
    dynamics: &'a Dynamics,
    theta: f64,
    dt: f64,
    n: usize,
    rng: ChaCha8Rng,
}

impl<'a> PathStepper<'a> {
    /// Draws θ from `prior` as the first use of `rng`.
    pub fn new(dynamics: &'a Dynamics, prior: &PriorSpec<f64>, dt: f64, mut rng: ChaCha8Rng) -> Self {
        let theta = sample_theta(prior, &mut rng);
        Self::with_theta(dynamics, theta, dt, rng)
    }

    pub fn with_theta(dynamics: &'a Dynamics, theta: f64, dt: f64, rng: ChaCha8Rng) -> Self {
        Self {
            dynamics,
            theta,
            dt,
            n: 0,
            rng,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Writes the increment over [t_n, t_{n+1}] into `out`.
    pub fn step(&mut self, out: &mut [f64]) {
        out.fill(0.0);
        let t0 = self.n as f64 * self.dt;
        let t1 = (self.n + 1) as f64 * self.dt;
        let dynamics = self.dynamics;
        if self.theta >= t1 {
            dynamics.add_increment(Regime::Pre, t1 - t0, &mut self.rng, out);
        } else if self.theta <= t0 {
            dynamics.add_increment(Regime::Post, t1 - t0, &mut self.rng, out);
        } else {
            dynamics.add_increment(Regime::Pre, self.theta - t0, &mut self.rng, out);
            dynamics.add_increment(Regime::Post, t1 - self.theta, &mut self.rng, out);
        }
        self.n += 1;
    }
}

/// One simulated trajectory on the grid t_n = n·dt.
#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub theta: f64,
    pub dt: f64,
    /// Row n holds X(t_{n+1}) − X(t_n).
    pub increments: Vec<Vec<f64>>,
    pub alarm: Option<usize>,
}

impl PathSample {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.increments.len()).map(|n| n as f64 * self.dt).collect()
    }
}

fn check_grid(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step dt = {dt} must be positive")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon T = {horizon} must be positive")));
    }
    Ok((horizon / dt - 1e-9).ceil().max(1.0) as usize)
}

/// Simulates a path of length `horizon` (rounded up to whole steps).
pub fn sample_path(
    model: &ModelSpec<f64>,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<PathSample> {
    let steps = check_grid(horizon, dt)?;
    let dynamics = Dynamics::new(model, tilt);
    let mut stepper = PathStepper::new(&dynamics, prior, dt, path_rng(seed, 0));
    let increments = (0..steps)
        .map(|_| {
            let mut dx = vec![0.0; dynamics.dim()];
            stepper.step(&mut dx);
            dx
        })
        .collect();
    Ok(PathSample {
        theta: stepper.theta(),
        dt,
        increments,
        alarm: None,
    })
}

/// First n with π̃_n ≥ `a`, running the statistic with step `path.dt`.
pub fn run_threshold_rule(
    path: &PathSample,
    tilt: &TiltSolution<f64>,
    prior: &PriorSpec<f64>,
    a: f64,
) -> Result<Option<usize>> {
    let mut state = gsr_init(prior);
    if state.pi >= a {
        return Ok(Some(0));
    }
    for dx in &path.increments {
        state = gsr_step_dt(&state, tilt, dx, prior, path.dt)?;
        if state.pi >= a {
            return Ok(Some(state.n));
        }
    }
    Ok(None)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
}

impl Stat {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().copied().collect::<KahanSum<f64>>().value() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let ss = values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .collect::<KahanSum<f64>>()
            .value();
        Self {
            mean,
            se: (ss / (n - 1) as f64 / n as f64).sqrt(),
        }
    }
}

/// Monte Carlo settings for risk studies.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonteCarlo {
    pub n_paths: usize,
    /// Defaults to E[θ] + 20/λ.
    pub horizon: Option<f64>,
    pub dt: f64,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            horizon: None,
            dt: DEFAULT_DT,
            seed: 0,
        }
    }
}

/// E[θ] + 20/λ; tables use 20·E[θ] in place of 20/λ.
pub fn default_horizon(prior: &PriorSpec<f64>) -> f64 {
    let mean = prior.mean();
    let spread = prior.rate().map(|l| 1.0 / l).unwrap_or(mean.max(1.0));
    mean + 20.0 * spread
}

/// Bayes risk of the rule "alarm when π̃ ≥ threshold", estimated directly
/// and through the posterior form on the same paths.
#[derive(Clone, Debug, Serialize)]
pub struct RiskEstimate {
    pub threshold: f64,
    /// P(τ < θ).
    pub false_alarm: Stat,
    /// E(τ − θ)⁺.
    pub delay: Stat,
    /// P(τ < θ) + c·E(τ − θ)⁺.
    pub bayes_risk: Stat,
    /// E[1 − π̃_τ + c·dt·Σ_{k<τ} π̃_k].
    pub posterior_form: Stat,
    /// Paired difference bayes_risk − posterior_form.
    pub difference: Stat,
    pub n_paths: usize,
    /// Paths without an alarm by the horizon; they are stopped there.
    pub censored: usize,
    pub censoring_warning: bool,
    pub horizon: f64,
    pub dt: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug)]
struct Outcome {
    false_alarm: f64,
    delay: f64,
    posterior_form: f64,
    censored: bool,
}

fn simulate_outcomes(
    dynamics: &Dynamics,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    c: f64,
    sorted: &[f64],
    steps: usize,
    dt: f64,
    rng: ChaCha8Rng,
) -> Result<Vec<Outcome>> {
    let mut stepper = PathStepper::new(dynamics, prior, dt, rng);
    let theta = stepper.theta();
    let mut out = Vec::with_capacity(sorted.len());
    let mut state = gsr_init(prior);
    let mut pi_sum = KahanSum::new();
    let mut dx = vec![0.0; dynamics.dim()];
    let record = |n: usize, pi: f64, sum: f64, censored: bool| {
        let tau = n as f64 * dt;
        Outcome {
            false_alarm: if tau < theta { 1.0 } else { 0.0 },
            delay: (tau - theta).max(0.0),
            posterior_form: 1.0 - pi + c * dt * sum,
            censored,
        }
    };
    loop {
        while out.len() < sorted.len() && state.pi >= sorted[out.len()] {
            out.push(record(state.n, state.pi, pi_sum.value(), false));
        }
        if out.len() == sorted.len() {
            break;
        }
        if state.n == steps {
            let o = record(state.n, state.pi, pi_sum.value(), true);
            out.resize(sorted.len(), o);
            break;
        }
        pi_sum.add(state.pi);
        stepper.step(&mut dx);
        state = gsr_step_dt(&state, tilt, &dx, prior, dt)?;
    }
    Ok(out)
}

/// Risk estimates for several thresholds on common paths.
pub fn estimate_risk_curve(
    model: &ModelSpec<f64>,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    cost: &CostSpec<f64>,
    thresholds: &[f64],
    mc: &MonteCarlo,
) -> Result<Vec<RiskEstimate>> {
    if mc.n_paths < MIN_PATHS {
        return Err(Error::Config(format!(
            "need at least {MIN_PATHS} paths, got {}",
            mc.n_paths
        )));
    }
    if let Some(&a) = thresholds.iter().find(|&&a| !(0.0..=1.0).contains(&a)) {
        return Err(Error::Config(format!("threshold {a} not in [0, 1]")));
    }
    let horizon = mc.horizon.unwrap_or_else(|| default_horizon(prior));
    let steps = check_grid(horizon, mc.dt)?;
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&i, &j| thresholds[i].total_cmp(&thresholds[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| thresholds[i]).collect();
    let dynamics = Dynamics::new(model, tilt);
    let c = cost.c;

    let paths: Vec<Vec<Outcome>> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_outcomes(&dynamics, prior, tilt, c, &sorted, steps, mc.dt, path_rng(mc.seed, i)))
        .collect::<Result<_>>()?;

    let mut estimates: Vec<Option<RiskEstimate>> = vec![None; thresholds.len()];
    for (slot, &original) in order.iter().enumerate() {
        let column = |f: &dyn Fn(&Outcome) -> f64| -> Vec<f64> { paths.iter().map(|p| f(&p[slot])).collect() };
        let censored = paths.iter().filter(|p| p[slot].censored).count();
        estimates[original] = Some(RiskEstimate {
            threshold: thresholds[original],
            false_alarm: Stat::from_samples(&column(&|o| o.false_alarm)),
            delay: Stat::from_samples(&column(&|o| o.delay)),
            bayes_risk: Stat::from_samples(&column(&|o| o.false_alarm + c * o.delay)),
            posterior_form: Stat::from_samples(&column(&|o| o.posterior_form)),
            difference: Stat::from_samples(&column(&|o| o.false_alarm + c * o.delay - o.posterior_form)),
            n_paths: mc.n_paths,
            censored,
            censoring_warning: censored as f64 > CENSORING_WARNING * mc.n_paths as f64,
            horizon,
            dt: mc.dt,
            c,
        });
    }
    Ok(estimates.into_iter().map(|e| e.expect("every slot filled")).collect())
}

pub fn estimate_risk(
    model: &ModelSpec<f64>,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    cost: &CostSpec<f64>,
    threshold: f64,
    mc: &MonteCarlo,
) -> Result<RiskEstimate> {
    let mut curve = estimate_risk_curve(model, prior, tilt, cost, &[threshold], mc)?;
    Ok(curve.remove(0))
}

/// X_T − X_0 under a single regime for `n_paths` independent paths.
pub fn sample_terminals(
    model: &ModelSpec<f64>,
    tilt: &TiltSolution<f64>,
    regime: Regime,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let dynamics = Dynamics::new(model, tilt);
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut x = vec![0.0; dynamics.dim()];
            dynamics.add_increment(regime, horizon, &mut rng, &mut x);
            x
        })
        .collect()
}

/// Posterior π_h after a short horizon `h`, started from π_0 = G(0) and
/// stepped with `substeps` sub-intervals. The prior mass G(t_{k+1}) − G(t_k)
/// enters each sub-step exactly.
fn posterior_after(
    dynamics: &Dynamics,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    h: f64,
    substeps: usize,
    rng: ChaCha8Rng,
) -> f64 {
    let dt = h / substeps as f64;
    let mut stepper = PathStepper::new(dynamics, prior, dt, rng);
    let mut psi = Psi::Linear(prior.cdf(0.0));
    let mut dx = vec![0.0; dynamics.dim()];
    for k in 0..substeps {
        stepper.step(&mut dx);
        let mass = prior.cdf((k + 1) as f64 * dt) - prior.cdf(k as f64 * dt);
        let l = crate::tilt::log_lr_increment(tilt, &dx, dt);
        psi = psi.advance(mass, l);
    }
    psi.posterior(1.0 - prior.cdf(h))
}

/// Monte Carlo estimates of (E_x[f(π_h)] − f(x))/h, x = G(0), for each of
/// `fs`. The same paths serve every function.
pub fn generator_estimate(
    model: &ModelSpec<f64>,
    prior: &PriorSpec<f64>,
    tilt: &TiltSolution<f64>,
    h: f64,
    substeps: usize,
    n_paths: usize,
    seed: u64,
    fs: &[&(dyn Fn(f64) -> f64 + Sync)],
) -> Result<Vec<Stat>> {
    check_grid(h, h / substeps.max(1) as f64)?;
    let dynamics = Dynamics::new(model, tilt);
    let x = prior.cdf(0.0);
    let finals: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| posterior_after(&dynamics, prior, tilt, h, substeps.max(1), path_rng(seed, i)))
        .collect();
    Ok(fs
        .iter()
        .map(|f| {
            let fx = f(x);
            let values: Vec<f64> = finals.iter().map(|&p| (f(p) - fx) / h).collect();
            Stat::from_samples(&values)
        })
        .collect())
}
