//! Log-linear calibration of a two-dimensional force-of-mortality series.
//!
//! With μ̂_i the force of mortality in year i of the window,
//! log μ̂_i = a0 + a1·i + X̂_i. The residual increments x_i = X̂_{i+1} − X̂_i
//! give the volatilities and the correlation of the perturbation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{KahanSum, Scalar};

/// Annual force of mortality for one age, male and female.
#[derive(Clone, Debug, PartialEq)]
pub struct MortalitySeries<T> {
    pub years: Vec<i32>,
    pub mu: Vec<[T; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    year: i32,
    mu_male: f64,
    mu_female: f64,
}

impl<T: Scalar> MortalitySeries<T> {
    /// Years must be consecutive, forces positive, at least three rows.
    pub fn new(years: Vec<i32>, mu: Vec<[T; 2]>) -> Result<Self> {
        if years.len() != mu.len() {
            return Err(Error::InvalidSeries(format!(
                "{} years but {} rows of mortality",
                years.len(),
                mu.len()
            )));
        }
        if years.len() < 3 {
            return Err(Error::InvalidSeries(format!(
                "need at least 3 years, got {}",
                years.len()
            )));
        }
        if let Some(w) = years.windows(2).find(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidSeries(format!(
                "years must be consecutive, found {} after {}",
                w[1], w[0]
            )));
        }
        for (year, m) in years.iter().zip(&mu) {
            if m.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
                return Err(Error::InvalidSeries(format!(
                    "non-positive force of mortality in {year}"
                )));
            }
        }
        Ok(Self { years, mu })
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    /// Index range of the years in `from..=to`.
    fn window_range(&self, (from, to): (i32, i32)) -> std::ops::Range<usize> {
        let start = self.years.partition_point(|&y| y < from);
        let end = self.years.partition_point(|&y| y <= to);
        start..end.max(start)
    }

    /// Sub-series restricted to `from..=to`, not re-validated for length.
    pub fn slice(&self, window: (i32, i32)) -> Self {
        let r = self.window_range(window);
        Self {
            years: self.years[r.clone()].to_vec(),
            mu: self.mu[r].to_vec(),
        }
    }
}

impl MortalitySeries<f64> {
    /// Reads a `year,mu_male,mu_female` CSV.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut years = Vec::new();
        let mut mu = Vec::new();
        for row in reader.deserialize() {
            let row: Row = row.map_err(|e| Error::csv(path, e))?;
            years.push(row.year);
            mu.push([row.mu_male, row.mu_female]);
        }
        Self::new(years, mu)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for (&year, m) in self.years.iter().zip(&self.mu) {
            writer
                .serialize(Row {
                    year,
                    mu_male: m[0],
                    mu_female: m[1],
                })
                .map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult<T> {
    /// log μ̂ at the window start.
    pub a0: [T; 2],
    /// Mean annual log-increment.
    pub a1: [T; 2],
    pub sigma1: T,
    pub sigma2: T,
    pub rho: T,
    pub window: (i32, i32),
    /// Number of residual increments behind the statistics.
    pub n_increments: usize,
}

impl<T: Scalar> CalibrationResult<T> {
    pub fn sigma(&self) -> [T; 2] {
        [self.sigma1, self.sigma2]
    }
}

/// Calibrates on the years `window.0..=window.1` of `series`.
pub fn calibrate<T: Scalar>(series: &MortalitySeries<T>, window: (i32, i32)) -> Result<CalibrationResult<T>> {
    let range = series.window_range(window);
    if range.len() < 3 {
        return Err(Error::InvalidSeries(format!(
            "window {}–{} holds {} years, need at least 3",
            window.0,
            window.1,
            range.len()
        )));
    }
    let logs: Vec<[T; 2]> = series.mu[range.clone()]
        .iter()
        .map(|m| [m[0].ln(), m[1].ln()])
        .collect();
    let n = logs.len() - 1;
    let nf = T::lit(n as f64);
    let a0 = logs[0];
    let mut a1 = [T::zero(); 2];
    for (k, slot) in a1.iter_mut().enumerate() {
        let sum: KahanSum<T> = logs.windows(2).map(|w| w[1][k] - w[0][k]).collect();
        *slot = sum.value() / nf;
    }

    let result = CalibrationResult {
        a0,
        a1,
        sigma1: T::zero(),
        sigma2: T::zero(),
        rho: T::zero(),
        window: (series.years[range.start], series.years[range.end - 1]),
        n_increments: n,
    };
    let resid: Vec<[T; 2]> = residuals_of(&logs, &result);
    let incs: Vec<[T; 2]> = resid
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect();

    let mean = |k: usize| {
        let s: KahanSum<T> = incs.iter().map(|x| x[k]).collect();
        s.value() / nf
    };
    let (m0, m1) = (mean(0), mean(1));
    let (mut s00, mut s11, mut s01) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
    for x in &incs {
        let (d0, d1) = (x[0] - m0, x[1] - m1);
        s00.add(d0 * d0);
        s11.add(d1 * d1);
        s01.add(d0 * d1);
    }
    let (s00, s11, s01) = (s00.value(), s11.value(), s01.value());
    for (k, s) in [s00, s11].into_iter().enumerate() {
        if !(s > T::zero()) {
            return Err(Error::DegenerateSeries { coordinate: k + 1 });
        }
    }
    let denom = T::lit((n - 1) as f64);
    let rho = (s01 / (s00 * s11).sqrt()).max(-T::one()).min(T::one());
    Ok(CalibrationResult {
        sigma1: (s00 / denom).sqrt(),
        sigma2: (s11 / denom).sqrt(),
        rho,
        ..result
    })
}

fn residuals_of<T: Scalar>(logs: &[[T; 2]], result: &CalibrationResult<T>) -> Vec<[T; 2]> {
    logs.iter()
        .enumerate()
        .map(|(i, l)| {
            let i = T::lit(i as f64);
            [
                l[0] - result.a0[0] - result.a1[0] * i,
                l[1] - result.a0[1] - result.a1[1] * i,
            ]
        })
        .collect()
}

/// X̂ for every year of `series`, indexed from the calibration window start
/// (X̂ = 0 there). Years before the window get negative indices.
pub fn residual_series<T: Scalar>(series: &MortalitySeries<T>, result: &CalibrationResult<T>) -> Vec<[T; 2]> {
    series
        .years
        .iter()
        .zip(&series.mu)
        .map(|(&year, m)| {
            let i = T::lit(f64::from(year - result.window.0));
            [
                m[0].ln() - result.a0[0] - result.a1[0] * i,
                m[1].ln() - result.a0[1] - result.a1[1] * i,
            ]
        })
        .collect()
}
