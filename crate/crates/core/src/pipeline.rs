//! Life-table detection runs: calibrate, tilt, threshold, annual
//! statistic, alarm year, and the plot data behind them.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calibrate::{calibrate, residual_series, CalibrationResult, MortalitySeries};
use crate::error::{Error, Result};
use crate::freeboundary::solve_threshold;
use crate::model::{Config, Drift, ModelSpec};
use crate::posterior::{gsr_init, gsr_step};
use crate::simulate::{path_rng, Dynamics, PathStepper};
use crate::tilt::{solve_tilt, TiltSolution};

pub const MORTALITY_FILE: &str = "mortality.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const POSTERIOR_FILE: &str = "posterior.csv";

/// One monitored year. The first year carries no increment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct YearRecord {
    pub year: i32,
    pub x: Option<[f64; 2]>,
    pub psi: f64,
    pub pi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectionReport {
    pub config: Config,
    pub calibration_window: (i32, i32),
    pub monitoring_window: (i32, i32),
    /// The recursion starts at the monitoring window start with ψ = x0.
    pub recursion_start: i32,
    pub calibration: CalibrationResult<f64>,
    /// Post-change drift used for the tilt.
    pub drift_r: Vec<f64>,
    pub tilt: TiltSolution<f64>,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "A_star")]
    pub a_star: f64,
    pub threshold_no_root: bool,
    /// Input years inside the monitoring window: (year, μ_male, μ_female).
    pub mortality: Vec<(i32, [f64; 2])>,
    /// Residuals X̂ inside the monitoring window.
    pub residuals: Vec<(i32, [f64; 2])>,
    pub series: Vec<YearRecord>,
    pub alarm_year: Option<i32>,
}

impl DetectionReport {
    /// First monitored year with π̃ ≥ `threshold`.
    pub fn first_year_at(&self, threshold: f64) -> Option<i32> {
        self.series.iter().find(|r| r.pi >= threshold).map(|r| r.year)
    }
}

/// Parses `Y1:Y2`.
pub fn parse_window(text: &str) -> Result<(i32, i32)> {
    let parse = |s: &str| {
        s.trim()
            .parse::<i32>()
            .map_err(|_| Error::Config(format!("bad year {s:?} in window {text:?}")))
    };
    match text.split_once(':') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Err(Error::Config(format!("window {text:?} is not of the form Y1:Y2"))),
    }
}

/// Bivariate model with lower-triangular σ from calibrated volatilities.
pub fn calibrated_model(cal: &CalibrationResult<f64>, config: &Config) -> Result<ModelSpec<f64>> {
    if config.jumps.is_some() {
        return Err(Error::Config(
            "detection thresholds are only available for models without jumps".into(),
        ));
    }
    if let Some(dim) = config.dim.filter(|&d| d != 2) {
        return Err(Error::Config(format!("life-table detection is bivariate, config has dim = {dim}")));
    }
    let r = match config.drift()? {
        Drift::Auto => [cal.sigma1, cal.sigma2],
        Drift::Explicit(v) if v.len() == 2 => [v[0], v[1]],
        Drift::Explicit(v) => {
            return Err(Error::Config(format!("r has {} entries, expected 2", v.len())))
        }
    };
    ModelSpec::bivariate(cal.sigma1, cal.sigma2, cal.rho, r).validated()
}

pub fn run_detection(
    series: &MortalitySeries<f64>,
    config: &Config,
    calibration_window: (i32, i32),
    monitoring_window: (i32, i32),
) -> Result<DetectionReport> {
    if monitoring_window.0 < calibration_window.0 {
        return Err(Error::Config(format!(
            "monitoring starts in {} before calibration start {}",
            monitoring_window.0, calibration_window.0
        )));
    }
    let calibration = calibrate(series, calibration_window)?;
    let model = calibrated_model(&calibration, config)?;
    let prior = config.prior()?;
    let cost = config.cost()?;
    let tilt = solve_tilt(&model)?;
    let b = tilt.diffusion_coefficient(&model);
    let lambda = prior.rate().ok_or_else(|| {
        Error::Config("the alarm threshold needs an exponential prior (`lambda`)".into())
    })?;
    let threshold = solve_threshold(b, lambda, cost.c)?;

    let (from, to) = monitoring_window;
    let monitored = series.slice(monitoring_window);
    if !monitored.is_empty() && (monitored.years[0] != from || *monitored.years.last().unwrap() != to) {
        return Err(Error::InvalidSeries(format!(
            "data cover {}–{}, monitoring window is {from}–{to}",
            series.years[0],
            series.years[series.len() - 1]
        )));
    }
    let residuals: Vec<(i32, [f64; 2])> = monitored
        .years
        .iter()
        .copied()
        .zip(residual_series(&monitored, &calibration))
        .collect();

    let mut records = Vec::with_capacity(residuals.len());
    let mut state = gsr_init(&prior);
    for (k, &(year, xhat)) in residuals.iter().enumerate() {
        let x = if k == 0 {
            None
        } else {
            let prev = residuals[k - 1].1;
            let dx = [xhat[0] - prev[0], xhat[1] - prev[1]];
            state = gsr_step(&state, &tilt, &dx, &prior)?;
            Some(dx)
        };
        records.push(YearRecord {
            year,
            x,
            psi: state.psi(),
            pi: state.pi,
        });
    }
    let alarm_year = records.iter().find(|r| r.pi >= threshold.a_star).map(|r| r.year);

    Ok(DetectionReport {
        config: config.clone(),
        calibration_window,
        monitoring_window,
        recursion_start: from,
        calibration,
        drift_r: model.drift_r.clone(),
        tilt,
        b,
        a_star: threshold.a_star,
        threshold_no_root: threshold.no_root,
        mortality: monitored.years.iter().copied().zip(monitored.mu.iter().copied()).collect(),
        residuals,
        series: records,
        alarm_year,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn pair_csv(header: &str, rows: &[(i32, [f64; 2])]) -> String {
    let mut s = format!("{header}\n");
    for (year, v) in rows {
        s.push_str(&format!("{year},{},{}\n", v[0], v[1]));
    }
    s
}

/// Writes mortality, residual and posterior CSVs into `dir` and returns
/// their paths. Floats are written in shortest round-trip form.
pub fn emit_plot_data(report: &DetectionReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mortality = dir.join(MORTALITY_FILE);
    write_text(&mortality, &pair_csv("year,mu_male,mu_female", &report.mortality))?;
    let residuals = dir.join(RESIDUALS_FILE);
    write_text(&residuals, &pair_csv("year,x_male,x_female", &report.residuals))?;

    let posterior = dir.join(POSTERIOR_FILE);
    let mut s = String::from("year,dx_male,dx_female,psi,pi,a_star\n");
    for r in &report.series {
        let (a, b) = match r.x {
            Some(x) => (x[0].to_string(), x[1].to_string()),
            None => (String::new(), String::new()),
        };
        s.push_str(&format!("{},{a},{b},{},{},{}\n", r.year, r.psi, r.pi, report.a_star));
    }
    write_text(&posterior, &s)?;
    Ok(vec![mortality, residuals, posterior])
}

/// Reads back a posterior CSV written by [`emit_plot_data`].
pub fn read_posterior_csv(path: impl AsRef<Path>) -> Result<Vec<YearRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let bad = |what: &str| Error::InvalidSeries(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| row.get(i).ok_or_else(|| bad("row length"));
        let num = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|_| bad("number")) };
        let year = field(0)?.parse().map_err(|_| bad("year"))?;
        let x = if field(1)?.is_empty() {
            None
        } else {
            Some([num(1)?, num(2)?])
        };
        out.push(YearRecord {
            year,
            x,
            psi: num(3)?,
            pi: num(4)?,
        });
    }
    Ok(out)
}

/// Parameters of a synthetic two-population life table.
#[derive(Clone, Debug)]
pub struct SyntheticTable {
    pub first_year: i32,
    pub years: usize,
    /// log μ in the first year.
    pub a0: [f64; 2],
    /// Annual log-drift.
    pub a1: [f64; 2],
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    /// Year from which the residual gains drift `r`.
    pub change_year: Option<i32>,
    pub r: [f64; 2],
}

impl Default for SyntheticTable {
    fn default() -> Self {
        Self {
            first_year: 1990,
            years: 28,
            a0: [-3.9, -4.6],
            a1: [-0.015, -0.02],
            sigma1: 0.03,
            sigma2: 0.02,
            rho: 0.33,
            change_year: None,
            r: [0.03, 0.02],
        }
    }
}

impl SyntheticTable {
    /// log μ_i = a0 + a1·i + X_i with X a bivariate diffusion that switches to
    /// drift `r` at the change year.
    pub fn generate(&self, seed: u64) -> Result<MortalitySeries<f64>> {
        let model = ModelSpec::bivariate(self.sigma1, self.sigma2, self.rho, self.r).validated()?;
        let tilt = solve_tilt(&model)?;
        let dynamics = Dynamics::new(&model, &tilt);
        let theta = self
            .change_year
            .map(|y| f64::from(y - self.first_year))
            .unwrap_or(f64::INFINITY);
        let mut stepper = PathStepper::with_theta(&dynamics, theta, 1.0, path_rng(seed, 0));
        let mut x = [0.0; 2];
        let mut dx = [0.0; 2];
        let mut mu = Vec::with_capacity(self.years);
        for i in 0..self.years {
            if i > 0 {
                stepper.step(&mut dx);
                x[0] += dx[0];
                x[1] += dx[1];
            }
            let i = i as f64;
            mu.push([
                (self.a0[0] + self.a1[0] * i + x[0]).exp(),
                (self.a0[1] + self.a1[1] * i + x[1]).exp(),
            ]);
        }
        let years = (self.first_year..).take(self.years).collect();
        MortalitySeries::new(years, mu)
    }
}
