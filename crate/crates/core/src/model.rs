//! Model, prior and cost specifications plus the JSON configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Scalar;

/// Sign of the one-sided exponential jump marginals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpDirection {
    #[default]
    Positive,
    Negative,
}

impl JumpDirection {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            JumpDirection::Positive => T::one(),
            JumpDirection::Negative => -T::one(),
        }
    }
}

/// Pre-change compound Poisson part: intensity and independent exponential
/// marginals with means `jump_means_pre`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec<T> {
    pub intensity_pre: T,
    pub jump_means_pre: Vec<T>,
    pub direction: JumpDirection,
}

impl<T: Scalar> JumpSpec<T> {
    /// Signed mean jump vector of the pre-change law.
    pub fn signed_means(&self) -> Vec<T> {
        let s = self.direction.sign::<T>();
        self.jump_means_pre.iter().map(|&w| s * w).collect()
    }
}

/// Pre/post-change jump-diffusion parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub sigma: Matrix<T>,
    pub drift_r: Vec<T>,
    pub jumps: Option<JumpSpec<T>>,
}

impl<T: Scalar> ModelSpec<T> {
    /// Builds a model from a row-major `dim`×`dim` mixing matrix. Only shapes
    /// are checked here; see [`validate`] for the numerical invariants.
    pub fn new(dim: usize, sigma: Vec<T>, drift_r: Vec<T>, jumps: Option<JumpSpec<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        let sigma = Matrix::from_row_major(dim, sigma).ok_or_else(|| {
            Error::Config(format!("sigma must hold {} entries for dim = {dim}", dim * dim))
        })?;
        if drift_r.len() != dim {
            return Err(Error::Config(format!(
                "r has {} entries, expected {dim}",
                drift_r.len()
            )));
        }
        if let Some(j) = &jumps {
            if j.jump_means_pre.len() != dim {
                return Err(Error::Config(format!(
                    "jumps.w has {} entries, expected {dim}",
                    j.jump_means_pre.len()
                )));
            }
        }
        Ok(Self {
            sigma,
            drift_r,
            jumps,
        })
    }

    /// Two-dimensional diffusion with marginal volatilities `s1`, `s2` and
    /// correlation `rho`, mixed by the lower-triangular factor.
    pub fn bivariate(s1: T, s2: T, rho: T, drift_r: [T; 2]) -> Self {
        let sigma = vec![
            s1,
            T::zero(),
            s2 * rho,
            s2 * (T::one() - rho * rho).sqrt(),
        ];
        Self {
            sigma: Matrix::from_row_major(2, sigma).expect("2x2"),
            drift_r: drift_r.to_vec(),
            jumps: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    /// Diffusion covariance per unit time, σσᵀ.
    pub fn gram(&self) -> Matrix<T> {
        self.sigma.gram()
    }

    /// Marginal standard deviations sqrt((σσᵀ)_ii).
    pub fn marginal_sd(&self) -> Vec<T> {
        let g = self.gram();
        (0..self.dim()).map(|i| g.get(i, i).sqrt()).collect()
    }

    pub fn with_drift(mut self, drift_r: Vec<T>) -> Self {
        self.drift_r = drift_r;
        self
    }

    /// Returns the model unchanged when it passes [`validate`].
    pub fn validated(self) -> Result<Self> {
        let report = validate(&self);
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report.violations))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every violated model invariant.
pub fn validate<T: Scalar>(spec: &ModelSpec<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let d = spec.dim();
    for i in 0..d {
        let s = spec.sigma.get(i, i);
        if !(s > T::zero()) {
            violations.push(format!("σ_{}{} ≤ 0", i + 1, i + 1));
        }
    }
    if spec.sigma.as_slice().iter().any(|v| !v.is_finite()) {
        violations.push("σ has non-finite entries".into());
    }
    if spec.drift_r.iter().any(|v| !v.is_finite()) {
        violations.push("r has non-finite entries".into());
    }
    if let Err(e) = Cholesky::factor(&spec.gram()) {
        violations.push(format!(
            "σσᵀ singular (pivot {} at index {})",
            e.pivot,
            e.index + 1
        ));
    }
    if let Some(j) = &spec.jumps {
        if !(j.intensity_pre >= T::zero()) || !j.intensity_pre.is_finite() {
            violations.push("jump intensity μ^∞ < 0".into());
        }
        for (i, w) in j.jump_means_pre.iter().enumerate() {
            if !(*w > T::zero()) || !w.is_finite() {
                violations.push(format!("jump mean w_{} ≤ 0", i + 1));
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind<T> {
    /// Conditional on θ > 0, θ ~ Exp(rate).
    Exponential { rate: T },
    /// Points (t, G(t)); linear in between, constant after the last point.
    Tabulated { grid: Vec<(T, T)> },
}

/// 0-modified distribution G of the change point: atom `atom_x` at θ = 0
/// plus a continuous part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec<T> {
    pub atom_x: T,
    pub kind: PriorKind<T>,
}

/// Largest final table value treated as "the table covers the whole law".
pub const TABLE_COMPLETE: f64 = 1.0 - 1e-9;

impl<T: Scalar> PriorSpec<T> {
    pub fn exponential(atom_x: T, rate: T) -> Result<Self> {
        let p = Self {
            atom_x,
            kind: PriorKind::Exponential { rate },
        };
        p.check()?;
        Ok(p)
    }

    pub fn tabulated(atom_x: T, grid: Vec<(T, T)>) -> Result<Self> {
        let p = Self {
            atom_x,
            kind: PriorKind::Tabulated { grid },
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let x = self.atom_x;
        if !(x >= T::zero() && x < T::one()) {
            return Err(Error::InvalidPrior(format!("atom x0 = {x} not in [0, 1)")));
        }
        match &self.kind {
            PriorKind::Exponential { rate } => {
                if !(*rate > T::zero()) || !rate.is_finite() {
                    return Err(Error::InvalidPrior(format!("rate λ = {rate} must be positive")));
                }
            }
            PriorKind::Tabulated { grid } => {
                if grid.is_empty() {
                    return Err(Error::InvalidPrior("empty table".into()));
                }
                let mut prev: Option<(T, T)> = None;
                for &(t, g) in grid {
                    if !(t >= T::zero()) || !t.is_finite() {
                        return Err(Error::InvalidPrior(format!("grid time {t} is negative")));
                    }
                    if !(g >= x && g <= T::one()) {
                        return Err(Error::InvalidPrior(format!("G({t}) = {g} not in [x0, 1]")));
                    }
                    if let Some((pt, pg)) = prev {
                        if !(t > pt) {
                            return Err(Error::InvalidPrior("grid times must increase strictly".into()));
                        }
                        if g < pg {
                            return Err(Error::InvalidPrior(format!("G decreases at t = {t}")));
                        }
                    } else if t == T::zero() && (g - x).abs() > T::lit(1e-12) {
                        return Err(Error::InvalidPrior(format!("G(0) = {g} differs from x0 = {x}")));
                    }
                    prev = Some((t, g));
                }
            }
        }
        Ok(())
    }

    /// Table nodes including the implicit (0, x0) anchor.
    fn nodes(grid: &[(T, T)], x: T) -> impl Iterator<Item = (T, T)> + '_ {
        let anchor = (grid[0].0 > T::zero()).then_some((T::zero(), x));
        anchor.into_iter().chain(grid.iter().copied())
    }

    /// G(t).
    pub fn cdf(&self, t: T) -> T {
        let x = self.atom_x;
        if t < T::zero() {
            return T::zero();
        }
        match &self.kind {
            PriorKind::Exponential { rate } => x + (T::one() - x) * (-(-*rate * t).exp_m1()),
            PriorKind::Tabulated { grid } => {
                let mut prev: Option<(T, T)> = None;
                for (tn, gn) in Self::nodes(grid, x) {
                    if t <= tn {
                        return match prev {
                            None => gn,
                            Some((tp, gp)) => gp + (gn - gp) * (t - tp) / (tn - tp),
                        };
                    }
                    prev = Some((tn, gn));
                }
                prev.map(|p| p.1).unwrap_or(x)
            }
        }
    }

    /// Density of the continuous part, G'(t) for t ≥ 0 (right derivative at 0).
    pub fn density(&self, t: T) -> T {
        if t < T::zero() {
            return T::zero();
        }
        match &self.kind {
            PriorKind::Exponential { rate } => {
                (T::one() - self.atom_x) * *rate * (-*rate * t).exp()
            }
            PriorKind::Tabulated { grid } => {
                let nodes: Vec<(T, T)> = Self::nodes(grid, self.atom_x).collect();
                let n = nodes.len();
                if n < 2 || t > nodes[n - 1].0 {
                    return T::zero();
                }
                let slope = |i: usize| {
                    let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                    (nodes[hi].1 - nodes[lo].1) / (nodes[hi].0 - nodes[lo].0)
                };
                let k = nodes.iter().position(|&(tn, _)| t <= tn).unwrap_or(n - 1);
                if k == 0 {
                    return slope(0);
                }
                let (t0, t1) = (nodes[k - 1].0, nodes[k].0);
                let w = (t - t0) / (t1 - t0);
                slope(k - 1) * (T::one() - w) + slope(k) * w
            }
        }
    }

    /// Smallest t with G(t) ≥ u; +∞ when u exceeds the tabulated mass.
    pub fn quantile(&self, u: T) -> T {
        let x = self.atom_x;
        if u <= x {
            return T::zero();
        }
        match &self.kind {
            PriorKind::Exponential { rate } => {
                if u >= T::one() {
                    return T::infinity();
                }
                -(-(u - x) / (T::one() - x)).ln_1p() / *rate
            }
            PriorKind::Tabulated { grid } => {
                let mut prev = (T::zero(), x);
                for (tn, gn) in Self::nodes(grid, x) {
                    if gn >= u {
                        let (tp, gp) = prev;
                        return tp + (tn - tp) * (u - gp) / (gn - gp);
                    }
                    prev = (tn, gn);
                }
                T::infinity()
            }
        }
    }

    /// Last tabulated time and value, if the prior is tabulated.
    pub fn table_end(&self) -> Option<(T, T)> {
        match &self.kind {
            PriorKind::Tabulated { grid } => grid.last().copied(),
            PriorKind::Exponential { .. } => None,
        }
    }

    pub fn rate(&self) -> Option<T> {
        match self.kind {
            PriorKind::Exponential { rate } => Some(rate),
            PriorKind::Tabulated { .. } => None,
        }
    }

    /// E[θ] restricted to the law's finite part (table: ∫(G_end − G) dt).
    pub fn mean(&self) -> T {
        match &self.kind {
            PriorKind::Exponential { rate } => (T::one() - self.atom_x) / *rate,
            PriorKind::Tabulated { grid } => {
                let g_end = grid.last().map(|p| p.1).unwrap_or(T::one());
                let nodes: Vec<(T, T)> = Self::nodes(grid, self.atom_x).collect();
                let half = T::lit(0.5);
                nodes.windows(2).fold(T::zero(), |acc, w| {
                    let (t0, g0) = w[0];
                    let (t1, g1) = w[1];
                    acc + (t1 - t0) * (g_end - half * (g0 + g1))
                })
            }
        }
    }
}

/// Delay-cost weight c > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec<T> {
    pub c: T,
}

impl<T: Scalar> CostSpec<T> {
    pub fn new(c: T) -> Result<Self> {
        if c > T::zero() && c.is_finite() {
            Ok(Self { c })
        } else {
            Err(Error::InvalidCost(c.as_f64()))
        }
    }
}

// ---------------------------------------------------------------------------
// configuration file

/// Post-change drift as written in the config: an explicit vector or `"auto"`
/// (the marginal standard deviations of the diffusion).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftConfig {
    Explicit(Vec<f64>),
    Keyword(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpConfig {
    pub mu_inf: f64,
    pub w: Vec<f64>,
    #[serde(default)]
    pub direction: JumpDirection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub x0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(f64, f64)>>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            x0: 0.1,
            lambda: Some(0.1),
            table: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub c: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { c: 0.1 }
    }
}

/// The JSON configuration file. Missing prior/cost/r fall back to
/// x0 = 0.1, λ = 0.1, c = 0.1, r = "auto".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<DriftConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_auto: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpConfig>,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub cost: CostConfig,
}

/// Resolved drift request.
#[derive(Clone, Debug, PartialEq)]
pub enum Drift {
    Auto,
    Explicit(Vec<f64>),
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    /// Mortality-setting defaults with the given bivariate diffusion.
    pub fn bivariate(s1: f64, s2: f64, rho: f64) -> Self {
        let m = ModelSpec::bivariate(s1, s2, rho, [0.0, 0.0]);
        Self {
            dim: Some(2),
            sigma: Some(m.sigma.as_slice().to_vec()),
            r: Some(DriftConfig::Keyword("auto".into())),
            ..Self::default()
        }
    }

    pub fn drift(&self) -> Result<Drift> {
        let explicit = match &self.r {
            None => None,
            Some(DriftConfig::Explicit(v)) => Some(v.clone()),
            Some(DriftConfig::Keyword(k)) if k == "auto" => None,
            Some(DriftConfig::Keyword(k)) => {
                return Err(Error::Config(format!("r must be a vector or \"auto\", got {k:?}")))
            }
        };
        match (explicit, self.r_auto.unwrap_or(false)) {
            (Some(_), true) => Err(Error::ConfigConflict(
                "explicit r given together with r_auto = true".into(),
            )),
            (Some(v), false) => Ok(Drift::Explicit(v)),
            (None, _) => Ok(Drift::Auto),
        }
    }

    pub fn jumps(&self) -> Option<JumpSpec<f64>> {
        self.jumps.as_ref().map(|j| JumpSpec {
            intensity_pre: j.mu_inf,
            jump_means_pre: j.w.clone(),
            direction: j.direction,
        })
    }

    /// Model from `dim`, `sigma`, `r` and `jumps`, validated.
    pub fn model(&self) -> Result<ModelSpec<f64>> {
        let dim = self
            .dim
            .ok_or_else(|| Error::Config("missing key `dim`".into()))?;
        let sigma = self
            .sigma
            .clone()
            .ok_or_else(|| Error::Config("missing key `sigma`".into()))?;
        let placeholder = vec![0.0; dim];
        let model = ModelSpec::new(dim, sigma, placeholder, self.jumps())?;
        let r = match self.drift()? {
            Drift::Explicit(v) => v,
            Drift::Auto => model.marginal_sd(),
        };
        ModelSpec::new(dim, model.sigma.as_slice().to_vec(), r, model.jumps)?.validated()
    }

    pub fn prior(&self) -> Result<PriorSpec<f64>> {
        let p = &self.prior;
        match (p.lambda, &p.table) {
            (Some(_), Some(_)) => Err(Error::ConfigConflict(
                "prior has both `lambda` and `table`".into(),
            )),
            (Some(l), None) => PriorSpec::exponential(p.x0, l),
            (None, Some(t)) => PriorSpec::tabulated(p.x0, t.clone()),
            (None, None) => Err(Error::Config("prior needs `lambda` or `table`".into())),
        }
    }

    pub fn cost(&self) -> Result<CostSpec<f64>> {
        CostSpec::new(self.cost.c)
    }
}
