//! Generalized Shiryaev-Roberts statistic and the generator of the
//! posterior probability process.
//!
//! With per-step log-likelihood ratios ℓ_k = z·x_k − K·dt the statistic obeys
//!
//! ```text
//! ψ_{n+1} = (ψ_n + G'(t_n)·dt) · exp(ℓ_{n+1}),   ψ_0 = G(0)
//! π_n     = ψ_n / (ψ_n + 1 − G(t_n))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeboundary;
use crate::model::{ModelSpec, PriorSpec, TABLE_COMPLETE};
use crate::scalar::Scalar;
use crate::tilt::{log_lr_increment, TiltSolution};

/// ψ above which the statistic is carried as ln ψ.
pub const LOG_SWITCH: f64 = 1e100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psi<T> {
    Linear(T),
    Log(T),
}

impl<T: Scalar> Psi<T> {
    fn from_log(lp: T) -> Self {
        if lp > T::lit(LOG_SWITCH.ln()) {
            Psi::Log(lp)
        } else {
            Psi::Linear(lp.exp())
        }
    }

    pub fn value(self) -> T {
        match self {
            Psi::Linear(p) => p,
            Psi::Log(lp) => lp.exp(),
        }
    }

    pub fn ln(self) -> T {
        match self {
            Psi::Linear(p) => p.ln(),
            Psi::Log(lp) => lp,
        }
    }

    /// (ψ + g)·e^ℓ without overflow.
    pub fn advance(self, g: T, l: T) -> Self {
        match self {
            Psi::Linear(p) => {
                let base = p + g;
                let next = base * l.exp();
                if next.is_finite() && next <= T::lit(LOG_SWITCH) {
                    Psi::Linear(next)
                } else if base > T::zero() {
                    Psi::from_log(base.ln() + l)
                } else {
                    Psi::Linear(T::zero())
                }
            }
            Psi::Log(lp) => Psi::from_log(lp + (g * (-lp).exp()).ln_1p() + l),
        }
    }

    /// ψ / (ψ + tail).
    pub fn posterior(self, tail: T) -> T {
        if !(tail > T::zero()) {
            return T::one();
        }
        match self {
            Psi::Linear(p) => p / (p + tail),
            Psi::Log(lp) => T::one() / (T::one() + tail * (-lp).exp()),
        }
    }
}

/// Running detection statistic after `n` observations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GsrState<T> {
    pub n: usize,
    /// Observation time t_n.
    pub time: T,
    pub psi: Psi<T>,
    pub pi: T,
    /// Prior density G'(t_n).
    pub g_n: T,
}

impl<T: Scalar> GsrState<T> {
    pub fn psi(&self) -> T {
        self.psi.value()
    }
}

/// ψ_0 = π_0 = G(0).
pub fn gsr_init<T: Scalar>(prior: &PriorSpec<T>) -> GsrState<T> {
    let x = prior.atom_x;
    let psi = Psi::Linear(x);
    GsrState {
        n: 0,
        time: T::zero(),
        psi,
        pi: psi.posterior(T::one() - prior.cdf(T::zero())),
        g_n: prior.density(T::zero()),
    }
}

/// One annual step (dt = 1).
pub fn gsr_step<T: Scalar>(
    state: &GsrState<T>,
    tilt: &TiltSolution<T>,
    dx: &[T],
    prior: &PriorSpec<T>,
) -> Result<GsrState<T>> {
    gsr_step_dt(state, tilt, dx, prior, T::one())
}

/// One step of length `dt`; G' and K are scaled by `dt`.
pub fn gsr_step_dt<T: Scalar>(
    state: &GsrState<T>,
    tilt: &TiltSolution<T>,
    dx: &[T],
    prior: &PriorSpec<T>,
    dt: T,
) -> Result<GsrState<T>> {
    let next_time = T::from_usize(state.n + 1).expect("step index") * dt;
    if let Some((t_end, g_end)) = prior.table_end() {
        if next_time > t_end && g_end < T::lit(TABLE_COMPLETE) {
            return Err(Error::PriorExhausted {
                step: state.n + 1,
                time: next_time.as_f64(),
            });
        }
    }
    let l = log_lr_increment(tilt, dx, dt);
    let psi = state.psi.advance(state.g_n * dt, l);
    Ok(GsrState {
        n: state.n + 1,
        time: next_time,
        psi,
        pi: psi.posterior(T::one() - prior.cdf(next_time)),
        g_n: prior.density(next_time),
    })
}

/// Runs the recursion over `increments` and returns π̃_0..π̃_n.
pub fn gsr_run<T: Scalar>(
    increments: &[Vec<T>],
    tilt: &TiltSolution<T>,
    prior: &PriorSpec<T>,
    dt: T,
) -> Result<Vec<T>> {
    let mut state = gsr_init(prior);
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(state.pi);
    for dx in increments {
        state = gsr_step_dt(&state, tilt, dx, prior, dt)?;
        out.push(state.pi);
    }
    Ok(out)
}

/// Reference evaluation of π̃_0..π̃_n from the direct sum
/// ψ_n = L_n G(0) + Σ_{j<n} (L_n/L_j) G'(j), with every ratio L_n/L_j formed
/// as an explicit product of per-step likelihood ratios.
pub fn gsr_oracle<T: Scalar>(increments: &[Vec<T>], tilt: &TiltSolution<T>, prior: &PriorSpec<T>) -> Vec<T> {
    gsr_oracle_dt(increments, tilt, prior, T::one())
}

pub fn gsr_oracle_dt<T: Scalar>(
    increments: &[Vec<T>],
    tilt: &TiltSolution<T>,
    prior: &PriorSpec<T>,
    dt: T,
) -> Vec<T> {
    let ratios: Vec<T> = increments
        .iter()
        .map(|dx| log_lr_increment(tilt, dx, dt).exp())
        .collect();
    (0..=increments.len())
        .map(|n| {
            let t_n = T::from_usize(n).unwrap() * dt;
            let product = |from: usize| ratios[from..n].iter().fold(T::one(), |acc, &r| acc * r);
            let mut psi = product(0) * prior.cdf(T::zero());
            for j in 0..n {
                let t_j = T::from_usize(j).unwrap() * dt;
                psi = psi + product(j) * prior.density(t_j) * dt;
            }
            let tail = T::one() - prior.cdf(t_n);
            if tail > T::zero() {
                psi / (psi + tail)
            } else {
                T::one()
            }
        })
        .collect()
}

/// A test function with its first two derivatives.
#[derive(Clone, Copy)]
pub struct SmoothFn<'a> {
    pub f: &'a dyn Fn(f64) -> f64,
    pub df: &'a dyn Fn(f64) -> f64,
    pub d2f: &'a dyn Fn(f64) -> f64,
}

impl<'a> SmoothFn<'a> {
    pub fn new(
        f: &'a dyn Fn(f64) -> f64,
        df: &'a dyn Fn(f64) -> f64,
        d2f: &'a dyn Fn(f64) -> f64,
    ) -> Self {
        Self { f, df, d2f }
    }
}

/// Generator of the posterior process for an exponential prior with rate
/// `lambda`, applied to `f` at state `x ∈ (0, 1)`.
///
/// Without jumps this is f'(x)λ(1−x) + ½f''(x)x²(1−x)²B with B = zᵀσσᵀz;
/// with jumps it is [`freeboundary::jump_generator_assemble`].
pub fn generator_apply(
    f: SmoothFn<'_>,
    x: f64,
    model: &ModelSpec<f64>,
    tilt: &TiltSolution<f64>,
    lambda: f64,
) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain {
            what: "posterior state x",
            value: x,
            domain: "(0, 1)",
        });
    }
    let has_jumps = model
        .jumps
        .as_ref()
        .is_some_and(|j| j.intensity_pre > 0.0);
    if has_jumps {
        return freeboundary::jump_generator_assemble(f, x, model, tilt, lambda);
    }
    let b = tilt.diffusion_coefficient(model);
    Ok(diffusion_generator(f, x, b, lambda))
}

/// f'(x)λ(1−x) + ½f''(x)x²(1−x)²B.
pub fn diffusion_generator(f: SmoothFn<'_>, x: f64, b: f64, lambda: f64) -> f64 {
    let s = x * (1.0 - x);
    (f.df)(x) * lambda * (1.0 - x) + 0.5 * (f.d2f)(x) * s * s * b
}
