//! Optimal alarm threshold for the diffusion case and the integral
//! reductions behind the jump-case generator.
//!
//! For the diffusion model the value function solves
//! f'(x)λ(1−x) + ½f''(x)x²(1−x)²B = −cx on [0, A*) with f = 1 − x beyond.
//! Its derivative on the continuation region is
//!
//! ```text
//! y(s) = −(2c/B) ∫_0^s exp(−(2λ/B)[Z(s) − Z(u)]) du / (u(1−u)²),
//! Z(u) = ln(u/(1−u)) − 1/u,
//! ```
//!
//! the threshold is the root of y(A*) = −1 and
//! V(x) = 1 − A* − ∫_x^{A*} y(s) ds below it.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{JumpDirection, ModelSpec};
use crate::posterior::SmoothFn;
use crate::quadrature::Quadrature;
use crate::tilt::TiltSolution;

/// Below this u, the y-integrand is integrated in v = 1/u.
pub const INVERSE_SPLIT: f64 = 0.05;
/// Exponents below this underflow in double precision.
pub const UNDERFLOW_EXPONENT: f64 = -745.0;
/// Number of Chebyshev nodes of y on (0, A*].
pub const CURVE_POINTS: usize = 512;
/// Distance from 1 of the last bracketing point.
pub const EDGE: f64 = 1e-6;
pub const ROOT_TOLERANCE: f64 = 1e-10;
/// Minimum separation of hypoexponential rates.
pub const BETA_SEPARATION: f64 = 1e-9;

const Y_QUADRATURE: Quadrature = Quadrature {
    rel_tol: 1e-11,
    abs_tol: 0.0,
    max_evaluations: 10_000_000,
};

/// Z(u) = ln(u/(1−u)) − 1/u on (0, 1); −∞ below u = 1e−300.
pub fn z_potential(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain {
            what: "u",
            value: u,
            domain: "(0, 1)",
        });
    }
    if u < 1e-300 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((u / (1.0 - u)).ln() - 1.0 / u)
}

fn check_positive(what: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: v,
            domain: "(0, ∞)",
        })
    }
}

/// y(s): derivative of the value function on the continuation region.
pub fn y_eval(s: f64, b: f64, lambda: f64, c: f64) -> Result<f64> {
    check_positive("B", b)?;
    check_positive("λ", lambda)?;
    if !(c >= 0.0) {
        return Err(Error::Domain {
            what: "c",
            value: c,
            domain: "[0, ∞)",
        });
    }
    if s == 0.0 || c == 0.0 {
        return Ok(0.0);
    }
    let zs = z_potential(s)?;
    let a = 2.0 * lambda / b;
    let prefactor = 2.0 * c / b;

    let mut total = 0.0;

    // u ∈ (0, min(s, split)] in v = 1/u = v0 + w, with Z(1/v) = −ln(v−1) − v.
    // The exponent is split so no large terms cancel when s is tiny.
    let v0 = 1.0 / s.min(INVERSE_SPLIT);
    let base = if s < INVERSE_SPLIT {
        0.0
    } else {
        a * (-(v0 - 1.0).ln() - v0 - zs)
    };
    let exponent = |w: f64| base - a * ((w / (v0 - 1.0)).ln_1p() + w);
    if base >= UNDERFLOW_EXPONENT {
        let mut w_max = 1.0 / a;
        while exponent(w_max) >= UNDERFLOW_EXPONENT {
            w_max *= 2.0;
        }
        let mut breaks = vec![0.0];
        let mut step = 1.0 / a;
        while step < w_max {
            breaks.push(step);
            step *= 4.0;
        }
        breaks.push(w_max);
        let inner = Y_QUADRATURE.integrate_pieces(
            |w| {
                let e = exponent(w);
                if e < UNDERFLOW_EXPONENT {
                    0.0
                } else {
                    let v = v0 + w;
                    e.exp() * v / ((v - 1.0) * (v - 1.0))
                }
            },
            &breaks,
        )?;
        total += inner.value;
    }

    if s > INVERSE_SPLIT {
        let outer = Y_QUADRATURE.integrate(
            |u| {
                let e = a * ((u / (1.0 - u)).ln() - 1.0 / u - zs);
                e.exp() / (u * (1.0 - u) * (1.0 - u))
            },
            INVERSE_SPLIT,
            s,
        )?;
        total += outer.value;
    }
    Ok(-prefactor * total)
}

/// Chebyshev series on [0, A*] with Clenshaw evaluation.
#[derive(Clone, Debug)]
struct ChebSeries {
    half_width: f64,
    coeffs: Vec<f64>,
}

impl ChebSeries {
    /// Interpolates samples at s_k = A*(1 + cos(kπ/N))/2, k = 0..=N.
    fn interpolate(a_star: f64, samples: &[f64]) -> Self {
        let n = samples.len() - 1;
        let nf = n as f64;
        let coeffs = (0..=n)
            .map(|j| {
                let mut acc = crate::scalar::KahanSum::new();
                for (k, &v) in samples.iter().enumerate() {
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    acc.add(w * v * ((j * k) as f64 * PI / nf).cos());
                }
                let scale = if j == 0 || j == n { 1.0 / nf } else { 2.0 / nf };
                scale * acc.value()
            })
            .collect();
        Self {
            half_width: 0.5 * a_star,
            coeffs,
        }
    }

    /// Antiderivative series (in t), zero at t = −1, scaled to s.
    fn integral(&self) -> Self {
        let c = &self.coeffs;
        let n = c.len();
        let at = |k: usize| c.get(k).copied().unwrap_or(0.0);
        let mut out = vec![0.0; n + 1];
        for k in 1..=n {
            let v = if k == 1 {
                at(0) - 0.5 * at(2)
            } else {
                (at(k - 1) - at(k + 1)) / (2.0 * k as f64)
            };
            out[k] = v * self.half_width;
        }
        let mut series = Self {
            half_width: self.half_width,
            coeffs: out,
        };
        series.coeffs[0] = -series.eval_t(-1.0);
        series
    }

    fn eval_t(&self, t: f64) -> f64 {
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }

    fn eval(&self, s: f64) -> f64 {
        self.eval_t((s / self.half_width - 1.0).clamp(-1.0, 1.0))
    }
}

/// Optimal threshold, the sampled y-curve and the value function.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdSolution {
    pub a_star: f64,
    pub b: f64,
    pub lambda: f64,
    pub c: f64,
    /// y(1 − ε) > −1: alarm is never optimal below 1; `a_star` is 1 − ε.
    pub no_root: bool,
    /// Sign changes of y + 1 seen on the bracketing sweep.
    pub sign_changes: usize,
    /// (s, y(s)) at the Chebyshev nodes of (0, A*].
    pub y_curve: Vec<(f64, f64)>,
    #[serde(skip)]
    y_series: ChebSeries,
    #[serde(skip)]
    y_integral: ChebSeries,
}

impl ThresholdSolution {
    /// V(x): 1 − A* − ∫_x^{A*} y on [0, A*), 1 − x beyond.
    pub fn value(&self, x: f64) -> f64 {
        if x >= self.a_star {
            return 1.0 - x;
        }
        let x = x.max(0.0);
        1.0 - self.a_star - (self.y_integral.eval(self.a_star) - self.y_integral.eval(x))
    }

    /// V'(x): the interpolated y below A*, −1 beyond.
    pub fn value_slope(&self, x: f64) -> f64 {
        if x >= self.a_star {
            -1.0
        } else {
            self.y_series.eval(x.max(0.0))
        }
    }

    /// y(A*) + 1, recomputed by quadrature.
    pub fn smooth_fit_residual(&self) -> Result<f64> {
        Ok(y_eval(self.a_star, self.b, self.lambda, self.c)? + 1.0)
    }

    /// (x, V(x)) on a uniform grid of `n + 1` points over [0, 1].
    pub fn value_curve(&self, n: usize) -> Vec<(f64, f64)> {
        (0..=n)
            .map(|i| {
                let x = i as f64 / n as f64;
                (x, self.value(x))
            })
            .collect()
    }
}

fn sweep_points() -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=28).rev().map(|k| 0.1 * 10f64.powf(-k as f64 / 4.0)).collect();
    pts.pop();
    let steps = 48;
    let ratio = (EDGE / 0.9).ln() / steps as f64;
    pts.extend((0..=steps).map(|k| 1.0 - 0.9 * (ratio * k as f64).exp()));
    pts
}

/// Solves y(A*) = −1 by a geometric bracketing sweep followed by bisection.
pub fn solve_threshold(b: f64, lambda: f64, c: f64) -> Result<ThresholdSolution> {
    check_positive("B", b)?;
    check_positive("λ", lambda)?;
    check_positive("c", c)?;
    let g = |s: f64| y_eval(s, b, lambda, c).map(|y| y + 1.0);

    let mut bracket = None;
    let mut sign_changes = 0;
    let (mut prev_s, mut prev_g) = (0.0, 1.0);
    for s in sweep_points() {
        let gs = g(s)?;
        if (gs <= 0.0) != (prev_g <= 0.0) {
            sign_changes += 1;
            bracket.get_or_insert((prev_s, s));
        }
        prev_s = s;
        prev_g = gs;
    }

    let (a_star, no_root) = match bracket {
        None => (1.0 - EDGE, true),
        Some((mut lo, mut hi)) => {
            while hi - lo > ROOT_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if g(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (g_lo, g_hi) = (if lo > 0.0 { g(lo)? } else { 1.0 }, g(hi)?);
            // pick the endpoint with the smaller residual
            (if g_lo.abs() < g_hi.abs() { lo } else { hi }, false)
        }
    };

    let n = CURVE_POINTS;
    let nodes: Vec<f64> = (0..=n)
        .map(|k| 0.5 * a_star * (1.0 + (k as f64 * PI / n as f64).cos()))
        .collect();
    let samples = nodes
        .iter()
        .map(|&s| y_eval(s, b, lambda, c))
        .collect::<Result<Vec<f64>>>()?;
    let y_series = ChebSeries::interpolate(a_star, &samples);
    let y_integral = y_series.integral();
    let y_curve = nodes[..n]
        .iter()
        .rev()
        .zip(samples[..n].iter().rev())
        .map(|(&s, &y)| (s, y))
        .collect();

    Ok(ThresholdSolution {
        a_star,
        b,
        lambda,
        c,
        no_root,
        sign_changes,
        y_curve,
        y_series,
        y_integral,
    })
}

/// Which half-line the jump marginals live on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Closed form of E[f(x e^{±S} / (x(e^{±S} − 1) + 1))] for S a sum of
/// independent exponentials with distinct `rates`:
///
/// ```text
/// plus:  f(x) + Σ_i c_i ∫_x^1 f'(v) (x(1−v) / (v(1−x)))^{β_i} dv
/// minus: f(x) − Σ_i c_i ∫_0^x f'(v) (v(1−x) / (x(1−v)))^{β_i} dv
/// ```
///
/// with c_i = Π_{j≠i} β_j/(β_j − β_i). For two rates these are the I₊/I₋
/// reductions of the jump generator.
pub fn integral_reduction(f: SmoothFn<'_>, x: f64, rates: &[f64], side: Side) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            domain: "(0, 1]",
        });
    }
    for &beta in rates {
        check_positive("β", beta)?;
    }
    for (i, &bi) in rates.iter().enumerate() {
        for &bj in &rates[i + 1..] {
            if (bi - bj).abs() < BETA_SEPARATION {
                return Err(Error::BetaCollision(bi, bj));
            }
        }
    }
    let fx = (f.f)(x);
    if x == 1.0 || rates.is_empty() {
        return Ok(fx);
    }
    let quad = Quadrature::with_tolerance(1e-11, 1e-15);
    let log_odds_x = (x / (1.0 - x)).ln();
    let beta_min = rates.iter().copied().fold(f64::INFINITY, f64::min);

    let mut acc = 0.0;
    for (i, &bi) in rates.iter().enumerate() {
        let weight = rates
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(1.0, |w, (_, &bj)| w * bj / (bj - bi));
        // v as a function of the log-odds shift y ≥ 0
        let at_shift = |y: f64| {
            let sign = if side == Side::Plus { 1.0 } else { -1.0 };
            1.0 / (1.0 + (-(log_odds_x + sign * y)).exp())
        };
        let mut breaks: Vec<f64> = [0.0, 1.0, 4.0, 16.0, 64.0]
            .iter()
            .map(|&k| at_shift(k / beta_min))
            .collect();
        let integral = match side {
            Side::Plus => {
                breaks.push(1.0);
                breaks.dedup();
                quad.integrate_pieces(
                    |v| {
                        if v >= 1.0 {
                            return 0.0;
                        }
                        let lo = (v / (1.0 - v)).ln();
                        (f.df)(v) * (bi * (log_odds_x - lo)).exp()
                    },
                    &breaks,
                )?
            }
            Side::Minus => {
                breaks.push(0.0);
                breaks.reverse();
                breaks.dedup();
                quad.integrate_pieces(
                    |v| {
                        if v <= 0.0 {
                            return 0.0;
                        }
                        let lo = (v / (1.0 - v)).ln();
                        (f.df)(v) * (bi * (lo - log_odds_x)).exp()
                    },
                    &breaks,
                )?
            }
        };
        acc += weight * integral.value;
    }
    Ok(match side {
        Side::Plus => fx + acc,
        Side::Minus => fx - acc,
    })
}

/// Jump-case generator assembled from the integral reductions:
///
/// ```text
/// A f(x) = (1−x)μ^∞ I(β^∞) + xμ⁰ I(β⁰) − f(x)
///        + f'(x)(λ(1−x) + x(1−x)(μ^∞ − μ⁰)) + ½f''(x)x²(1−x)²B
/// ```
///
/// with β^∞_j = 1/(w_j z_j) and β⁰_j the same rates under the tilted law.
/// Requires z_j > 0 and distinct rates.
pub fn jump_generator_assemble(
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
    check_positive("λ", lambda)?;
    let pre = model
        .jumps
        .as_ref()
        .ok_or_else(|| Error::UnsupportedTilt("model has no jump part".into()))?;
    let post = tilt
        .post_jumps
        .as_ref()
        .ok_or_else(|| Error::UnsupportedTilt("tilt has no post-change jump law".into()))?;
    if let Some(z) = tilt.z.iter().find(|&&z| !(z > 0.0)) {
        return Err(Error::UnsupportedTilt(format!(
            "integral reduction needs z_j > 0, found {z}"
        )));
    }
    let rates_pre: Vec<f64> = pre
        .jump_means_pre
        .iter()
        .zip(&tilt.z)
        .map(|(w, z)| 1.0 / (w * z))
        .collect();
    let rates_post: Vec<f64> = post
        .jump_means_post
        .iter()
        .zip(&tilt.z)
        .map(|(w, z)| 1.0 / (w * z))
        .collect();
    let side = match pre.direction {
        JumpDirection::Positive => Side::Plus,
        JumpDirection::Negative => Side::Minus,
    };
    let (mu_pre, mu_post) = (pre.intensity_pre, post.intensity_post);
    let i_pre = integral_reduction(f, x, &rates_pre, side)?;
    let i_post = integral_reduction(f, x, &rates_post, side)?;
    let b = tilt.diffusion_coefficient(model);
    let s = x * (1.0 - x);
    Ok((1.0 - x) * mu_pre * i_pre + x * mu_post * i_post - (f.f)(x)
        + (f.df)(x) * (lambda * (1.0 - x) + s * (mu_pre - mu_post))
        + 0.5 * (f.d2f)(x) * s * s * b)
}
