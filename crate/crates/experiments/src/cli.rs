//! Command-line interface.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fpt_core::inference::{r_iae, relative_errors};
use fpt_core::simulator::simulate_sample;
use fpt_core::threshold_fit::fit;
use fpt_core::thresholds::fit_window;
use fpt_core::{CurvedThreshold, EstimationMethod, FitMethod, FptLaw, FptSample, SimConfig, WienerParams, WindowSpec};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::grid::{run_experiment, tabulated_cdf, DefaultEstimator, EstimationContext, Estimator};
use crate::ExperimentError;

#[derive(Debug, Parser)]
#[command(name = "fpt", version, about = "Passage times through a decaying threshold")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub t0: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub b0: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a two-piece linear threshold and print it as JSON.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long, default_value = "free")]
        method: String,
    },
    /// Tabulate the density and distribution function as CSV `t,pdf,cdf`.
    Density {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long, default_value = "free")]
        method: String,
        #[arg(long)]
        t_min: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        t_steps: usize,
    },
    /// Print mean, variance, CV and total mass as JSON.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long, default_value = "free")]
        method: String,
    },
    /// Simulate passage times and write them as CSV `stream_index,fpt`.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Censoring time; defaults to twenty fit-window lengths.
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate (mu, sigma2) from a sample CSV and print a JSON report.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: String,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, default_value = "free")]
        fit_method: String,
        #[arg(long)]
        truth_mu: Option<f64>,
        #[arg(long)]
        truth_sigma2: Option<f64>,
    },
    /// Run the grids of a TOML or JSON configuration.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct FitReport {
    method: String,
    alpha1: f64,
    beta1: f64,
    beta2: f64,
    t1: f64,
    alpha2: f64,
    tau0: f64,
    tau_star: f64,
    objective: f64,
}

#[derive(Debug, Serialize)]
struct MomentsReport {
    mean: f64,
    variance: f64,
    cv: f64,
    total_mass: f64,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    mu_hat: f64,
    sigma2_hat: f64,
    method: String,
    converged: bool,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_me_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_mse_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_me_sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_mse_sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r_iae: Option<f64>,
}

fn parse_fit_method(s: &str) -> Result<FitMethod, ExperimentError> {
    s.parse().map_err(|e: fpt_core::Error| ExperimentError::Config(e.to_string()))
}

fn build(model: &ModelArgs, th: &ThresholdArgs) -> Result<(WienerParams, CurvedThreshold), ExperimentError> {
    let w = WienerParams::new(model.mu, model.sigma2, model.x0, model.t0)?;
    let c = CurvedThreshold::new(th.b0, th.eps, th.lambda, model.t0)?;
    c.check_pairing(&w)?;
    Ok((w, c))
}

fn fitted_law(model: &ModelArgs, th: &ThresholdArgs, method: &str) -> Result<FptLaw, ExperimentError> {
    let (w, c) = build(model, th)?;
    let win = fit_window(&w, &c)?;
    let f = fit(&c, &win, parse_fit_method(method)?)?;
    Ok(FptLaw::new(w, f.threshold)?)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, ExperimentError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Executes a parsed command, writing its primary output to `out`.
pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<(), ExperimentError> {
    match cmd {
        Command::Fit {
            model,
            threshold,
            method,
        } => {
            let (w, c) = build(model, threshold)?;
            let win = fit_window(&w, &c)?;
            let f = fit(&c, &win, parse_fit_method(method)?)?;
            let thr = f.threshold;
            let report = FitReport {
                method: f.method.to_string(),
                alpha1: thr.alpha1(),
                beta1: thr.beta1(),
                beta2: thr.beta2(),
                t1: thr.t1(),
                alpha2: thr.alpha2(),
                tau0: win.tau0(),
                tau_star: win.tau_star(),
                objective: f.objective,
            };
            out.write_all(to_json(&report)?.as_bytes())?;
        }
        Command::Density {
            model,
            threshold,
            method,
            t_min,
            t_max,
            t_steps,
        } => {
            if !(t_min <= t_max) || *t_steps < 1 {
                return Err(ExperimentError::Config("need t-min <= t-max and t-steps >= 1".into()));
            }
            let law = fitted_law(model, threshold, method)?;
            let mut wtr = csv::Writer::from_writer(out);
            wtr.write_record(["t", "pdf", "cdf"])?;
            for i in 0..=*t_steps {
                let t = t_min + (t_max - t_min) * i as f64 / *t_steps as f64;
                let row = [t.to_string(), law.pdf(t).to_string(), law.cdf(t)?.to_string()];
                wtr.write_record(&row)?;
            }
            wtr.flush()?;
        }
        Command::Moments {
            model,
            threshold,
            method,
        } => {
            let m = fitted_law(model, threshold, method)?.moments()?;
            let report = MomentsReport {
                mean: m.mean,
                variance: m.variance,
                cv: m.cv,
                total_mass: m.total_mass,
            };
            out.write_all(to_json(&report)?.as_bytes())?;
        }
        Command::Simulate {
            model,
            threshold,
            n,
            dt,
            seed,
            t_max,
            out: path,
        } => {
            let (w, c) = build(model, threshold)?;
            let cfg = match t_max {
                Some(cap) => SimConfig::new(*dt, *n, *seed, *cap)?,
                None => SimConfig::for_window(*dt, *n, *seed, &fit_window(&w, &c)?)?,
            };
            let sample = simulate_sample(&w, &c, &cfg)?;
            match path {
                Some(p) => sample.write_csv(File::create(p)?)?,
                None => sample.write_csv(out)?,
            }
        }
        Command::Estimate {
            input,
            method,
            threshold,
            x0,
            t0,
            fit_method,
            truth_mu,
            truth_sigma2,
        } => {
            let method: EstimationMethod =
                method.parse().map_err(|e: fpt_core::Error| ExperimentError::Config(e.to_string()))?;
            let sample = FptSample::read_csv(BufReader::new(File::open(input)?), *t0)?;
            let template = WienerParams::new(1.0, 1.0, *x0, *t0)?;
            let curve = CurvedThreshold::new(threshold.b0, threshold.eps, threshold.lambda, *t0)?;
            curve.check_pairing(&template)?;
            let ctx = EstimationContext {
                truth: template,
                curve,
                fit_method: parse_fit_method(fit_method)?,
                window: WindowSpec::default(),
            };
            let est = DefaultEstimator::default()
                .estimate(&sample, &ctx, &[method])
                .pop()
                .expect("one method requested")?;
            let mut report = EstimateReport {
                mu_hat: est.mu_hat,
                sigma2_hat: est.sigma2_hat,
                method: est.method.to_string(),
                converged: est.converged,
                objective: est.objective_at_optimum,
                r_me_mu: None,
                r_mse_mu: None,
                r_me_sigma2: None,
                r_mse_sigma2: None,
                r_iae: None,
            };
            if let (Some(mu), Some(s2)) = (truth_mu, truth_sigma2) {
                let truth = WienerParams::new(*mu, *s2, *x0, *t0)?;
                let r = relative_errors(&[est], &truth)?;
                report.r_me_mu = Some(r.r_me_mu);
                report.r_mse_mu = Some(r.r_mse_mu);
                report.r_me_sigma2 = Some(r.r_me_sigma2);
                report.r_mse_sigma2 = Some(r.r_mse_sigma2);
            }
            // agreement of the fitted law at the estimate with the data
            let riae = est.process(&template).and_then(|w| {
                let win = fit_window(&w, &curve)?;
                let thr = fit(&curve, &win, ctx.fit_method)?.threshold;
                let table = tabulated_cdf(&FptLaw::new(w, thr)?)?;
                r_iae(|t| table.eval(t), &sample)
            });
            report.r_iae = riae.ok();
            out.write_all(to_json(&report)?.as_bytes())?;
        }
        Command::Experiment { config, out: dir } => {
            let cfg = ExperimentConfig::load(config)?;
            let dir = dir.clone().unwrap_or_else(|| cfg.output.dir.clone());
            for line in run_experiment(&cfg, &dir)? {
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = write!(err, "{e}");
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
