//! Exponential change of measure between the pre- and post-change laws.
//!
//! The post-change law is the pre-change law tilted by h(x) = exp(z·x). The
//! tilt vector solves M z = r − μ⁰m⁰ + μ^∞m^∞ with M = σσᵀ, and the
//! likelihood ratio over [0, t] is exp(z·(X_t − X_0) − K t).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::model::{JumpDirection, JumpSpec, ModelSpec};
use crate::scalar::{dot, Scalar};

pub const MAX_ITERATIONS: usize = 200;
pub const DAMPING: f64 = 0.5;
pub const TOLERANCE: f64 = 1e-12;

/// Tilted (post-change) compound Poisson part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostJumps<T> {
    pub intensity_post: T,
    /// Unsigned means of the exponential marginals.
    pub jump_means_post: Vec<T>,
    pub direction: JumpDirection,
}

impl<T: Scalar> PostJumps<T> {
    pub fn signed_means(&self) -> Vec<T> {
        let s = self.direction.sign::<T>();
        self.jump_means_post.iter().map(|&w| s * w).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltSolution<T> {
    pub z: Vec<T>,
    #[serde(rename = "K")]
    pub k: T,
    pub post_jumps: Option<PostJumps<T>>,
}

impl<T: Scalar> TiltSolution<T> {
    /// zᵀσσᵀz, the diffusion coefficient of the posterior process.
    pub fn diffusion_coefficient(&self, model: &ModelSpec<T>) -> T {
        model.gram().quad_form(&self.z)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Tilts independent one-sided exponential marginals by exp(z·y).
///
/// Returns `None` unless |w_j z_j| < 1 for every coordinate.
pub fn tilt_exponential_jumps<T: Scalar>(jumps: &JumpSpec<T>, z: &[T]) -> Option<PostJumps<T>> {
    let s = jumps.direction.sign::<T>();
    let mut scale = T::one();
    let mut means = Vec::with_capacity(z.len());
    for (&w, &zj) in jumps.jump_means_pre.iter().zip(z) {
        let wz = s * w * zj;
        if !(wz.abs() < T::one()) {
            return None;
        }
        let q = T::one() - wz;
        scale = scale / q;
        means.push(w / q);
    }
    Some(PostJumps {
        intensity_post: jumps.intensity_pre * scale,
        jump_means_post: means,
        direction: jumps.direction,
    })
}

fn compensator<T: Scalar>(gram: &Matrix<T>, z: &[T], jumps: Option<(&JumpSpec<T>, &PostJumps<T>)>) -> T {
    let half = T::lit(0.5);
    let mut k = half * gram.quad_form(z);
    if let Some((pre, post)) = jumps {
        k = k - pre.intensity_pre * dot(z, &pre.signed_means()) + post.intensity_post
            - pre.intensity_pre;
    }
    k
}

/// μ⁰m⁰ as a function of z, or `None` outside 1 − ŵ_j z_j > 0.
fn post_jump_drift<T: Scalar>(jumps: &JumpSpec<T>, z: &[T]) -> Option<Vec<T>> {
    let what = jumps.signed_means();
    let q: Vec<T> = what.iter().zip(z).map(|(&w, &zj)| T::one() - w * zj).collect();
    if q.iter().any(|&v| !(v > T::zero())) {
        return None;
    }
    let p = q.iter().fold(jumps.intensity_pre, |acc, &v| acc / v);
    Some(what.iter().zip(&q).map(|(&w, &qj)| p * w / qj).collect())
}

fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}

fn max_abs<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Solves for the tilt vector z, the compensator K and, with jumps, the
/// tilted jump law.
pub fn solve_tilt<T: Scalar>(model: &ModelSpec<T>) -> Result<TiltSolution<T>> {
    let gram = model.gram();
    let chol = Cholesky::factor(&gram)
        .map_err(|e| Error::InvalidModel(vec![format!("σσᵀ singular (pivot {})", e.pivot)]))?;
    let z0 = chol.solve(&model.drift_r);

    let Some(jumps) = model.jumps.as_ref().filter(|j| j.intensity_pre > T::zero()) else {
        let k = compensator(&gram, &z0, None);
        let post_jumps = model.jumps.as_ref().map(|j| PostJumps {
            intensity_post: T::zero(),
            jump_means_post: j.jump_means_pre.clone(),
            direction: j.direction,
        });
        return Ok(TiltSolution { z: z0, k, post_jumps });
    };

    let z = fixed_point(model, jumps, &chol, z0.clone())
        .or_else(|| newton(model, jumps, &gram, z0))
        .ok_or_else(|| {
            Error::TiltInfeasible(format!(
                "coupled tilt system did not converge within {MAX_ITERATIONS} iterations"
            ))
        })?;
    let post = tilt_exponential_jumps(jumps, &z).ok_or_else(|| {
        Error::TiltInfeasible(format!("|w_j z_j| ≥ 1 at the solution z = {z:?}"))
    })?;
    let k = compensator(&gram, &z, Some((jumps, &post)));
    Ok(TiltSolution {
        z,
        k,
        post_jumps: Some(post),
    })
}

/// Damped iteration z ← M⁻¹(r − μ⁰(z)m⁰(z) + μ^∞m^∞).
fn fixed_point<T: Scalar>(
    model: &ModelSpec<T>,
    jumps: &JumpSpec<T>,
    chol: &Cholesky<T>,
    mut z: Vec<T>,
) -> Option<Vec<T>> {
    let pre_drift: Vec<T> = jumps
        .signed_means()
        .iter()
        .map(|&m| jumps.intensity_pre * m)
        .collect();
    let damping = T::lit(DAMPING);
    for _ in 0..MAX_ITERATIONS {
        let post_drift = post_jump_drift(jumps, &z)?;
        let rhs: Vec<T> = (0..z.len())
            .map(|k| model.drift_r[k] - post_drift[k] + pre_drift[k])
            .collect();
        let target = chol.solve(&rhs);
        let next: Vec<T> = z
            .iter()
            .zip(&target)
            .map(|(&a, &b)| a + damping * (b - a))
            .collect();
        let step = max_abs_diff(&next, &z);
        z = next;
        if !step.is_finite() {
            return None;
        }
        if step <= T::lit(TOLERANCE) * T::one().max(max_abs(&z)) {
            return Some(z);
        }
    }
    None
}

/// Newton iteration with backtracking on F(z) = Mz − r + μ⁰m⁰(z) − μ^∞m^∞.
/// The Jacobian is M plus a positive semidefinite term, so each step solves
/// an SPD system.
fn newton<T: Scalar>(
    model: &ModelSpec<T>,
    jumps: &JumpSpec<T>,
    gram: &Matrix<T>,
    mut z: Vec<T>,
) -> Option<Vec<T>> {
    let d = z.len();
    let what = jumps.signed_means();
    let residual = |z: &[T]| -> Option<Vec<T>> {
        let post = post_jump_drift(jumps, z)?;
        let mz = gram.mul_vec(z);
        Some(
            (0..d)
                .map(|k| mz[k] - model.drift_r[k] + post[k] - jumps.intensity_pre * what[k])
                .collect(),
        )
    };
    let norm = |v: &[T]| max_abs(v);
    // Start inside the feasible region.
    while post_jump_drift(jumps, &z).is_none() {
        z.iter_mut().for_each(|v| *v = *v * T::lit(0.5));
        if max_abs(&z) < T::lit(1e-300) {
            break;
        }
    }
    let mut f = residual(&z)?;
    for _ in 0..MAX_ITERATIONS {
        let q: Vec<T> = what.iter().zip(&z).map(|(&w, &zj)| T::one() - w * zj).collect();
        let p = q.iter().fold(jumps.intensity_pre, |acc, &v| acc / v);
        let mut jac = Vec::with_capacity(d * d);
        for k in 0..d {
            for l in 0..d {
                let mut v = gram.get(k, l) + p * what[k] * what[l] / (q[k] * q[l]);
                if k == l {
                    v = v + p * what[k] * what[k] / (q[k] * q[k]);
                }
                jac.push(v);
            }
        }
        let jac = Matrix::from_row_major(d, jac)?;
        let step = Cholesky::factor(&jac).ok()?.solve(&f);
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<T> = z.iter().zip(&step).map(|(&a, &s)| a - t * s).collect();
            if let Some(fc) = residual(&cand) {
                if norm(&fc) < norm(&f) || norm(&fc) <= T::epsilon() {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t = t * T::lit(0.5);
        }
        let (cand, fc) = accepted?;
        let dz = max_abs_diff(&cand, &z);
        z = cand;
        f = fc;
        if dz <= T::lit(TOLERANCE) * T::one().max(max_abs(&z)) {
            return Some(z);
        }
    }
    None
}

/// Log-likelihood-ratio contribution of one increment: z·dx − K·dt.
#[inline]
pub fn log_lr_increment<T: Scalar>(tilt: &TiltSolution<T>, dx: &[T], dt: T) -> T {
    dot(&tilt.z, dx) - tilt.k * dt
}

/// Recovers r = Mz + μ⁰m⁰ − μ^∞m^∞ from a solution.
pub fn reconstruct_drift<T: Scalar>(model: &ModelSpec<T>, tilt: &TiltSolution<T>) -> Vec<T> {
    let mut r = model.gram().mul_vec(&tilt.z);
    if let (Some(pre), Some(post)) = (&model.jumps, &tilt.post_jumps) {
        let m_pre = pre.signed_means();
        let m_post = post.signed_means();
        for k in 0..r.len() {
            r[k] = r[k] + post.intensity_post * m_post[k] - pre.intensity_pre * m_pre[k];
        }
    }
    r
}
