use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use quickdrift::calibrate::{calibrate, MortalitySeries};
use quickdrift::error::ErrorKind;
use quickdrift::freeboundary::solve_threshold;
use quickdrift::pipeline::{emit_plot_data, parse_window, run_detection};
use quickdrift::posterior::gsr_run;
use quickdrift::simulate::{estimate_risk_curve, run_threshold_rule, sample_path, MonteCarlo, DEFAULT_DT};
use quickdrift::tilt::solve_tilt;
use quickdrift::{Config, Error};

#[derive(Parser)]
#[command(name = "quickdrift", version, about = "Bayesian quickest detection of drift changes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults to the bivariate mortality setting.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the log-linear mortality model and print it as JSON.
    Calibrate {
        #[arg(long)]
        input: PathBuf,
        /// Calibration window Y1:Y2.
        #[arg(long)]
        window: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve for the optimal threshold; optionally write y and V curves.
    Threshold {
        #[command(flatten)]
        common: Common,
        /// Directory for y_curve.csv and value.csv.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run detection on a life table and write plot data.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        calib_window: String,
        #[arg(long)]
        monitor_window: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Simulate one path and its posterior; write it as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50.0)]
        horizon: f64,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        /// Alarm threshold; defaults to the optimal one.
        #[arg(long = "A")]
        threshold: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate the Bayes risk of threshold rules.
    Risk {
        #[command(flatten)]
        common: Common,
        /// Thresholds, comma separated.
        #[arg(long = "A", value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config, Error> {
    match path {
        None => Ok(Config::bivariate(0.03, 0.02, 0.33)),
        Some(p) => Config::from_path(p).map_err(|e| match e {
            Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
            other => other,
        }),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Error> {
    match output {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> Result<String, Error> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Calibrate { input, window, output } => {
            let series = MortalitySeries::from_csv(&input)?;
            let result = calibrate(&series, parse_window(&window)?)?;
            emit(output.as_deref(), &pretty(&result)?)
        }
        Command::Threshold { common, output } => {
            let config = load_config(common.config.as_deref())?;
            let model = config.model()?;
            if model.jumps.is_some() {
                return Err(Error::Config("thresholds are only available for models without jumps".into()));
            }
            let prior = config.prior()?;
            let cost = config.cost()?;
            let lambda = prior
                .rate()
                .ok_or_else(|| Error::Config("the threshold needs an exponential prior (`lambda`)".into()))?;
            let tilt = solve_tilt(&model)?;
            let b = tilt.diffusion_coefficient(&model);
            let sol = solve_threshold(b, lambda, cost.c)?;
            if sol.no_root {
                eprintln!("warning: y stays above -1 on (0, 1); alarm is never optimal below 1");
            }
            if let Some(dir) = output {
                fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
                let mut y = String::from("s,y\n");
                for (s, v) in &sol.y_curve {
                    y.push_str(&format!("{s},{v}\n"));
                }
                write_file(&dir.join("y_curve.csv"), &y)?;
                let mut v = String::from("x,V\n");
                for (x, val) in sol.value_curve(1000) {
                    v.push_str(&format!("{x},{val}\n"));
                }
                write_file(&dir.join("value.csv"), &v)?;
            }
            let summary = json!({
                "A_star": sol.a_star,
                "B": b,
                "K": tilt.k,
                "z": tilt.z,
                "lambda": lambda,
                "c": cost.c,
                "no_root": sol.no_root,
                "sign_changes": sol.sign_changes,
            });
            print!("{}", pretty(&summary)?);
            Ok(())
        }
        Command::Detect {
            common,
            input,
            calib_window,
            monitor_window,
            output,
        } => {
            let config = match &common.config {
                Some(p) => load_config(Some(p))?,
                None => Config::default(),
            };
            let series = MortalitySeries::from_csv(&input)?;
            let report = run_detection(
                &series,
                &config,
                parse_window(&calib_window)?,
                parse_window(&monitor_window)?,
            )?;
            if let Some(dir) = output {
                emit_plot_data(&report, &dir)?;
                write_file(&dir.join("report.json"), &pretty(&report)?)?;
            }
            let summary = json!({
                "calibration": report.calibration,
                "r": report.drift_r,
                "z": report.tilt.z,
                "K": report.tilt.k,
                "B": report.b,
                "A_star": report.a_star,
                "recursion_start": report.recursion_start,
                "alarm_year": report.alarm_year,
            });
            print!("{}", pretty(&summary)?);
            Ok(())
        }
        Command::Simulate {
            common,
            horizon,
            dt,
            threshold,
            output,
        } => {
            let config = load_config(common.config.as_deref())?;
            let model = config.model()?;
            let prior = config.prior()?;
            let tilt = solve_tilt(&model)?;
            let a = match threshold {
                Some(a) => a,
                None => {
                    let lambda = prior
                        .rate()
                        .ok_or_else(|| Error::Config("pass --A for a tabulated prior".into()))?;
                    solve_threshold(tilt.diffusion_coefficient(&model), lambda, config.cost()?.c)?.a_star
                }
            };
            let mut path = sample_path(&model, &prior, &tilt, horizon, dt, common.seed)?;
            path.alarm = run_threshold_rule(&path, &tilt, &prior, a)?;
            let pis = gsr_run(&path.increments, &tilt, &prior, dt)?;
            let d = model.dim();
            let mut csv = String::from("t");
            for k in 1..=d {
                csv.push_str(&format!(",x{k}"));
            }
            csv.push_str(",pi\n");
            let mut x = vec![0.0; d];
            for (n, pi) in pis.iter().enumerate() {
                if n > 0 {
                    for (xk, dk) in x.iter_mut().zip(&path.increments[n - 1]) {
                        *xk += dk;
                    }
                }
                csv.push_str(&(n as f64 * dt).to_string());
                for xk in &x {
                    csv.push_str(&format!(",{xk}"));
                }
                csv.push_str(&format!(",{pi}\n"));
            }
            match output {
                Some(p) => {
                    write_file(&p, &csv)?;
                    let alarm_time = path.alarm.map(|n| n as f64 * dt);
                    let summary = json!({ "theta": path.theta, "A": a, "alarm_time": alarm_time });
                    print!("{}", pretty(&summary)?);
                    Ok(())
                }
                None => emit(None, &csv),
            }
        }
        Command::Risk {
            common,
            thresholds,
            paths,
            horizon,
            dt,
            output,
        } => {
            let config = load_config(common.config.as_deref())?;
            let model = config.model()?;
            let prior = config.prior()?;
            let cost = config.cost()?;
            let tilt = solve_tilt(&model)?;
            let mc = MonteCarlo {
                n_paths: paths,
                horizon,
                dt,
                seed: common.seed,
            };
            let curve = estimate_risk_curve(&model, &prior, &tilt, &cost, &thresholds, &mc)?;
            let mut csv = String::from(
                "A,false_alarm,false_alarm_se,delay,delay_se,risk,risk_se,posterior_form,posterior_form_se,censored\n",
            );
            for r in &curve {
                if r.censoring_warning {
                    eprintln!(
                        "warning: A = {}: {} of {} paths censored at horizon {}",
                        r.threshold, r.censored, r.n_paths, r.horizon
                    );
                }
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.threshold,
                    r.false_alarm.mean,
                    r.false_alarm.se,
                    r.delay.mean,
                    r.delay.se,
                    r.bayes_risk.mean,
                    r.bayes_risk.se,
                    r.posterior_form.mean,
                    r.posterior_form.se,
                    r.censored
                ));
            }
            emit(output.as_deref(), &csv)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
