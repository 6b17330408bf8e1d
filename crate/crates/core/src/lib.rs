//! Bayesian quickest detection of a drift change in multivariate
//! jump-diffusion processes.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: pre/post-change model, change-point prior, cost weight.
//! - [`tilt`]: exponential change of measure between the two regimes.
//! - [`posterior`]: the generalized Shiryaev-Roberts statistic and the
//!   generator of the posterior probability process.
//! - [`freeboundary`]: optimal alarm threshold and value function for the
//!   diffusion case, plus the integral reductions used by the jump generator.
//! - [`simulate`]: Monte Carlo paths, threshold rules and Bayes-risk estimates.
//! - [`calibrate`]: log-linear force-of-mortality calibration.
//! - [`pipeline`]: life-table detection runs and plot data.
//!
//! The algebraic layers ([`model`], [`tilt`], [`posterior`], [`calibrate`])
//! are generic over [`Scalar`]; the numerical layers work in `f64`. The
//! aliases at the crate root fix the scalar to `f64`.

pub mod calibrate;
pub mod error;
pub mod freeboundary;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod posterior;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod tilt;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelSpec = model::ModelSpec<f64>;
pub type JumpSpec = model::JumpSpec<f64>;
pub type PriorSpec = model::PriorSpec<f64>;
pub type CostSpec = model::CostSpec<f64>;
pub type TiltSolution = tilt::TiltSolution<f64>;
pub type GsrState = posterior::GsrState<f64>;
pub type MortalitySeries = calibrate::MortalitySeries<f64>;
pub type CalibrationResult = calibrate::CalibrationResult<f64>;

pub use freeboundary::ThresholdSolution;
pub use model::{Config, JumpDirection, ValidationReport};
pub use pipeline::DetectionReport;
pub use simulate::{PathSample, RiskEstimate};
