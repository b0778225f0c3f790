//! Grid runners for the statistics, estimation and R_IAE experiments.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use fpt_core::fpt_law::{small_eps_mean, small_eps_var, TAIL_MASS};
use fpt_core::inference::{
    default_initial_estimate, ig_moment_inversion, mle, moment_estimate, r_iae, relative_errors, sample_moments,
    small_eps_moment_estimate,
};
use fpt_core::simulator::{empirical_stats, simulate_sample};
use fpt_core::threshold_fit::{fit, fit_family};
use fpt_core::thresholds::fit_window_with;
use fpt_core::{
    CurvedThreshold, EmpiricalCdf, EstimationMethod, FitMethod, FitWindow, FittedFamily, FptLaw, FptMoments, FptSample,
    PhiEstimate, PiecewiseLinearThreshold, SimConfig, TabulatedCdf, WienerParams, WindowSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Cell, ExperimentConfig, Grid};
use crate::{cell_seed, ExperimentError};

/// Nodes per unit of tabulated distribution function.
pub const CDF_PANELS: usize = 4000;
/// Points of `[τ0, τ*]` where the stochastic ordering and Monte Carlo band are checked.
pub const SANDWICH_POINTS: usize = 201;
/// Width of the Monte Carlo band in binomial standard errors.
pub const BAND_WIDTH: f64 = 3.0;

type CoreResult<T> = Result<T, fpt_core::Error>;

/// Process, curved threshold, window and fitted thresholds of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellModel {
    pub cell: Cell,
    pub process: WienerParams,
    pub curve: CurvedThreshold,
    pub window: FitWindow,
    pub family: FittedFamily,
}

impl CellModel {
    pub fn new(cfg: &ExperimentConfig, cell: Cell) -> CoreResult<Self> {
        let process = WienerParams::new(cfg.model.mu, cell.sigma2, cfg.model.x0, cfg.model.t0)?;
        let curve = CurvedThreshold::new(cfg.threshold.b0, cell.eps, cell.lambda, cfg.model.t0)?;
        curve.check_pairing(&process)?;
        let window = fit_window_with(&process, &curve, &window_spec(cfg))?;
        let family = fit_family(&curve, &window)?;
        Ok(Self {
            cell,
            process,
            curve,
            window,
            family,
        })
    }

    pub fn law(&self, method: FitMethod) -> CoreResult<FptLaw> {
        FptLaw::new(self.process, self.family.get(method).threshold)
    }
}

pub fn window_spec(cfg: &ExperimentConfig) -> WindowSpec {
    WindowSpec {
        lower: cfg.fit.lower,
        upper: cfg.fit.upper,
        ..WindowSpec::default()
    }
}

/// Distribution function of a law tabulated up to its truncation time.
pub fn tabulated_cdf(law: &FptLaw) -> CoreResult<TabulatedCdf> {
    let end = law.truncation_time(TAIL_MASS)?;
    law.tabulate(end, CDF_PANELS)
}

/// Ordering of the bounding laws and position of the empirical cdf between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    /// Largest `F_{b₊}(t) − F_{b₋}(t)` over the check points; non-positive when ordered.
    pub order_violation: f64,
    /// Largest excursion of the empirical cdf outside `[F_{b₊} − kσ₊, F_{b₋} + kσ₋]`;
    /// non-positive when inside the band.
    pub band_excess: f64,
}

pub fn sandwich_check(above: &TabulatedCdf, below: &TabulatedCdf, ecdf: &EmpiricalCdf, win: &FitWindow) -> Sandwich {
    let n = ecdf.n() as f64;
    let mut order = f64::NEG_INFINITY;
    let mut band = f64::NEG_INFINITY;
    for t in win.grid(SANDWICH_POINTS) {
        let (lo, hi, f) = (above.eval(t), below.eval(t), ecdf.eval(t));
        order = order.max(lo - hi);
        let se_lo = (lo * (1.0 - lo) / n).sqrt();
        let se_hi = (hi * (1.0 - hi) / n).sqrt();
        band = band.max((lo - BAND_WIDTH * se_lo) - f).max(f - (hi + BAND_WIDTH * se_hi));
    }
    // ordering is also required between t0 and the window
    let t0 = win.t0();
    for i in 1..SANDWICH_POINTS {
        let t = t0 + (win.tau0() - t0) * i as f64 / SANDWICH_POINTS as f64;
        order = order.max(above.eval(t) - below.eval(t));
    }
    Sandwich {
        order_violation: order,
        band_excess: band,
    }
}

/// Everything computed for one cell of the statistics / R_IAE grids.
#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub cell: Cell,
    pub model: Option<CellModel>,
    /// Moments under the configured fit method.
    pub moments: Option<FptMoments>,
    pub mean_eps: Option<f64>,
    pub variance_eps: Option<f64>,
    pub empirical: Option<FptMoments>,
    pub n_paths: usize,
    pub censored: Option<usize>,
    /// R_IAE in [`FitMethod::ALL`] order.
    pub riae: [Option<f64>; 4],
    pub sandwich: Option<Sandwich>,
    pub errors: Vec<String>,
}

impl CellReport {
    pub fn failed(&self) -> bool {
        !self.errors.is_empty()
    }

    pub fn riae_for(&self, method: FitMethod) -> Option<f64> {
        let k = FitMethod::ALL.iter().position(|&m| m == method).expect("listed method");
        self.riae[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellOptions {
    pub simulate: bool,
    pub riae: bool,
}

fn record<T>(errors: &mut Vec<String>, what: &str, r: CoreResult<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            None
        }
    }
}

pub fn evaluate_cell(cfg: &ExperimentConfig, cell: Cell, opts: CellOptions) -> CellReport {
    let mut errors = Vec::new();
    let mut report = CellReport {
        cell,
        model: None,
        moments: None,
        mean_eps: None,
        variance_eps: None,
        empirical: None,
        n_paths: cfg.sim.n_paths,
        censored: None,
        riae: [None; 4],
        sandwich: None,
        errors: Vec::new(),
    };
    let method = match cfg.fit_method() {
        Ok(m) => m,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    let Some(model) = record(&mut errors, "fit", CellModel::new(cfg, cell)) else {
        report.errors = errors;
        return report;
    };
    report.model = Some(model);
    report.moments = record(&mut errors, "moments", model.law(method).and_then(|l| l.moments()));
    report.mean_eps = record(&mut errors, "small-eps mean", small_eps_mean(&model.process, &model.curve));
    report.variance_eps = record(&mut errors, "small-eps variance", small_eps_var(&model.process, &model.curve));

    if opts.simulate {
        let sample = SimConfig::for_window(cfg.sim.dt, cfg.sim.n_paths, cell_seed(cfg.sim.seed, cell.index, 0), &model.window)
            .and_then(|c| simulate_sample(&model.process, &model.curve, &c));
        if let Some(sample) = record(&mut errors, "simulation", sample) {
            report.censored = Some(sample.censored_count());
            report.empirical = record(&mut errors, "empirical", empirical_stats(&sample).map(|s| s.moments));
            if opts.riae {
                let mut tables = Vec::with_capacity(4);
                for (k, m) in FitMethod::ALL.iter().enumerate() {
                    let table = record(&mut errors, m.as_str(), model.law(*m).and_then(|l| tabulated_cdf(&l)));
                    if let Some(t) = &table {
                        report.riae[k] = record(&mut errors, "r_iae", r_iae(|x| t.eval(x), &sample));
                    }
                    tables.push(table);
                }
                if let (Some(up), Some(down)) = (&tables[1], &tables[2]) {
                    report.sandwich = Some(sandwich_check(up, down, &EmpiricalCdf::new(&sample), &model.window));
                }
            }
        }
    }
    report.errors = errors;
    report
}

/// Evaluates every cell; rows come back in cell order.
pub fn run_cell_grid(cfg: &ExperimentConfig, opts: CellOptions) -> Vec<CellReport> {
    cfg.cells().into_par_iter().map(|c| evaluate_cell(cfg, c, opts)).collect()
}

/// Rows plus failure accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable<R> {
    pub rows: Vec<R>,
    pub failed: usize,
    pub total: usize,
}

impl<R: Serialize> GridTable<R> {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut wtr = csv::Writer::from_writer(out);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), ExperimentError> {
        self.write_csv(File::create(path)?)
    }

    pub fn summary(&self, name: &str) -> String {
        format!("{name}: {} rows, {}/{} cells failed", self.rows.len(), self.failed, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticsRow {
    pub cell: usize,
    pub sigma2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub method: String,
    pub tau0: Option<f64>,
    pub tau_star: Option<f64>,
    pub alpha1: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub t1: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub cv: Option<f64>,
    pub total_mass: Option<f64>,
    pub mean_eps: Option<f64>,
    pub variance_eps: Option<f64>,
    pub cv_eps: Option<f64>,
    pub emp_mean: Option<f64>,
    pub emp_variance: Option<f64>,
    pub emp_cv: Option<f64>,
    pub n_paths: usize,
    pub censored: Option<usize>,
    pub error: String,
}

pub fn statistics_table(cfg: &ExperimentConfig, reports: &[CellReport]) -> GridTable<StatisticsRow> {
    let method = cfg.fit_method().map(|m| m.as_str()).unwrap_or("?");
    let rows = reports
        .iter()
        .map(|r| {
            let thr = r.model.map(|m| m.family.get(cfg.fit_method().unwrap_or(FitMethod::Free)).threshold);
            StatisticsRow {
                cell: r.cell.index,
                sigma2: r.cell.sigma2,
                eps: r.cell.eps,
                lambda: r.cell.lambda,
                method: method.to_string(),
                tau0: r.model.map(|m| m.window.tau0()),
                tau_star: r.model.map(|m| m.window.tau_star()),
                alpha1: thr.map(|t| t.alpha1()),
                beta1: thr.map(|t| t.beta1()),
                beta2: thr.map(|t| t.beta2()),
                t1: thr.map(|t| t.t1()),
                mean: r.moments.map(|m| m.mean),
                variance: r.moments.map(|m| m.variance),
                cv: r.moments.map(|m| m.cv),
                total_mass: r.moments.map(|m| m.total_mass),
                mean_eps: r.mean_eps,
                variance_eps: r.variance_eps,
                cv_eps: r.mean_eps.zip(r.variance_eps).map(|(m, v)| v.max(0.0).sqrt() / m),
                emp_mean: r.empirical.map(|m| m.mean),
                emp_variance: r.empirical.map(|m| m.variance),
                emp_cv: r.empirical.map(|m| m.cv),
                n_paths: r.n_paths,
                censored: r.censored,
                error: r.errors.join("; "),
            }
        })
        .collect();
    GridTable {
        rows,
        failed: reports.iter().filter(|r| r.failed()).count(),
        total: reports.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiaeRow {
    pub cell: usize,
    pub sigma2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub n_paths: usize,
    pub censored: Option<usize>,
    pub riae_free: Option<f64>,
    pub riae_above: Option<f64>,
    pub riae_below: Option<f64>,
    pub riae_between: Option<f64>,
    pub order_violation: Option<f64>,
    pub band_excess: Option<f64>,
    pub error: String,
}

pub fn riae_table(reports: &[CellReport]) -> GridTable<RiaeRow> {
    let rows = reports
        .iter()
        .map(|r| RiaeRow {
            cell: r.cell.index,
            sigma2: r.cell.sigma2,
            eps: r.cell.eps,
            lambda: r.cell.lambda,
            n_paths: r.n_paths,
            censored: r.censored,
            riae_free: r.riae_for(FitMethod::Free),
            riae_above: r.riae_for(FitMethod::Above),
            riae_below: r.riae_for(FitMethod::Below),
            riae_between: r.riae_for(FitMethod::Between),
            order_violation: r.sandwich.map(|s| s.order_violation),
            band_excess: r.sandwich.map(|s| s.band_excess),
            error: r.errors.join("; "),
        })
        .collect();
    GridTable {
        rows,
        failed: reports.iter().filter(|r| r.failed()).count(),
        total: reports.len(),
    }
}

pub fn run_statistics_grid(cfg: &ExperimentConfig) -> GridTable<StatisticsRow> {
    let reports = run_cell_grid(
        cfg,
        CellOptions {
            simulate: true,
            riae: false,
        },
    );
    statistics_table(cfg, &reports)
}

pub fn run_riae_grid(cfg: &ExperimentConfig) -> GridTable<RiaeRow> {
    let reports = run_cell_grid(
        cfg,
        CellOptions {
            simulate: true,
            riae: true,
        },
    );
    riae_table(&reports)
}

/// Inputs shared by every repetition of an estimation cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationContext {
    pub truth: WienerParams,
    pub curve: CurvedThreshold,
    pub fit_method: FitMethod,
    pub window: WindowSpec,
}

/// Produces one estimate per requested method from a sample.
pub trait Estimator: Sync {
    fn estimate(
        &self,
        sample: &FptSample,
        ctx: &EstimationContext,
        methods: &[EstimationMethod],
    ) -> Vec<CoreResult<PhiEstimate>>;
}

/// Likelihood and moment estimators with the threshold fitted at the initial estimate.
///
/// The fitting window depends on `(μ, σ²)`, which are unknown, so it is built
/// from the starting point; `refinements` further passes refit the threshold at
/// the latest likelihood estimate and maximize again.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DefaultEstimator {
    pub refinements: usize,
}

impl Default for DefaultEstimator {
    fn default() -> Self {
        Self { refinements: 1 }
    }
}

fn fitted_at(ctx: &EstimationContext, w: &WienerParams) -> CoreResult<PiecewiseLinearThreshold> {
    let win = fit_window_with(w, &ctx.curve, &ctx.window)?;
    Ok(fit(&ctx.curve, &win, ctx.fit_method)?.threshold)
}

impl Estimator for DefaultEstimator {
    fn estimate(
        &self,
        sample: &FptSample,
        ctx: &EstimationContext,
        methods: &[EstimationMethod],
    ) -> Vec<CoreResult<PhiEstimate>> {
        let init = default_initial_estimate(sample, &ctx.curve, &ctx.truth);
        let thr = init.as_ref().map_err(Clone::clone).and_then(|w| fitted_at(ctx, w));
        methods
            .iter()
            .map(|m| {
                let w0 = init.clone()?;
                match m {
                    EstimationMethod::Mle => {
                        let mut est = mle(sample, &thr.clone()?, &w0)?;
                        for _ in 0..self.refinements {
                            let next = est
                                .process(&w0)
                                .and_then(|w| fitted_at(ctx, &w).and_then(|thr| mle(sample, &thr, &w)));
                            match next {
                                Ok(e) => est = e,
                                Err(_) => break,
                            }
                        }
                        Ok(est)
                    }
                    EstimationMethod::Me => moment_estimate(sample, &thr.clone()?, &w0),
                    EstimationMethod::MeEps => {
                        let (mean, var) = sample_moments(sample)?;
                        let level = ctx.curve.b0() + ctx.curve.eps() / 2.0;
                        let start = ig_moment_inversion(mean, var, level, &ctx.truth)?;
                        small_eps_moment_estimate(sample, &ctx.curve, &start)
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationRow {
    pub cell: usize,
    pub sigma2: f64,
    pub eps: f64,
    pub lambda: f64,
    pub method: String,
    pub sample_size: usize,
    pub repetitions: usize,
    pub failed: usize,
    pub unconverged: usize,
    pub r_me_mu: Option<f64>,
    pub r_mse_mu: Option<f64>,
    pub r_me_sigma2: Option<f64>,
    pub r_mse_sigma2: Option<f64>,
    pub error: String,
}

/// Estimation study for one cell: `repetitions` samples of `sample_size` paths,
/// one row per method.
pub fn estimation_cell<E: Estimator>(cfg: &ExperimentConfig, cell: Cell, estimator: &E) -> Vec<EstimationRow> {
    let methods = cfg.estimators().unwrap_or_default();
    let base = |method: &str, error: String| EstimationRow {
        cell: cell.index,
        sigma2: cell.sigma2,
        eps: cell.eps,
        lambda: cell.lambda,
        method: method.to_string(),
        sample_size: cfg.sim.sample_size,
        repetitions: cfg.sim.repetitions,
        failed: cfg.sim.repetitions,
        unconverged: 0,
        r_me_mu: None,
        r_mse_mu: None,
        r_me_sigma2: None,
        r_mse_sigma2: None,
        error,
    };
    let setup = (|| -> CoreResult<(EstimationContext, FitWindow)> {
        let truth = WienerParams::new(cfg.model.mu, cell.sigma2, cfg.model.x0, cfg.model.t0)?;
        let curve = CurvedThreshold::new(cfg.threshold.b0, cell.eps, cell.lambda, cfg.model.t0)?;
        curve.check_pairing(&truth)?;
        let window = window_spec(cfg);
        let win = fit_window_with(&truth, &curve, &window)?;
        let fit_method = cfg.fit_method().map_err(|_| fpt_core::Error::Degenerate("fit method"))?;
        Ok((
            EstimationContext {
                truth,
                curve,
                fit_method,
                window,
            },
            win,
        ))
    })();
    let (ctx, win) = match setup {
        Ok(s) => s,
        Err(e) => return methods.iter().map(|m| base(m.as_str(), e.to_string())).collect(),
    };

    let per_rep: Vec<Vec<CoreResult<PhiEstimate>>> = (0..cfg.sim.repetitions)
        .into_par_iter()
        .map(|rep| {
            let sample = SimConfig::for_window(cfg.sim.dt, cfg.sim.sample_size, cell_seed(cfg.sim.seed, cell.index, rep as u64 + 1), &win)
                .and_then(|c| simulate_sample(&ctx.truth, &ctx.curve, &c));
            match sample {
                Ok(s) if s.censored_count() == 0 => estimator.estimate(&s, &ctx, &methods),
                Ok(_) => methods.iter().map(|_| Err(fpt_core::Error::Degenerate("censored sample"))).collect(),
                Err(e) => methods.iter().map(|_| Err(e.clone())).collect(),
            }
        })
        .collect();

    methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let mut ok = Vec::new();
            let mut first_error = None;
            for rep in &per_rep {
                match &rep[k] {
                    Ok(e) => ok.push(*e),
                    Err(e) => {
                        first_error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let mut row = base(m.as_str(), first_error.unwrap_or_default());
            row.failed = cfg.sim.repetitions - ok.len();
            row.unconverged = ok.iter().filter(|e| !e.converged).count();
            if let Ok(r) = relative_errors(&ok, &ctx.truth) {
                row.r_me_mu = Some(r.r_me_mu);
                row.r_mse_mu = Some(r.r_mse_mu);
                row.r_me_sigma2 = Some(r.r_me_sigma2);
                row.r_mse_sigma2 = Some(r.r_mse_sigma2);
            }
            row
        })
        .collect()
}

pub fn run_estimation_grid_with<E: Estimator>(cfg: &ExperimentConfig, estimator: &E) -> GridTable<EstimationRow> {
    let cells = cfg.cells();
    let per_cell: Vec<Vec<EstimationRow>> = cells.iter().map(|&c| estimation_cell(cfg, c, estimator)).collect();
    let failed = per_cell.iter().filter(|rows| rows.iter().any(|r| !r.error.is_empty())).count();
    GridTable {
        rows: per_cell.into_iter().flatten().collect(),
        failed,
        total: cells.len(),
    }
}

pub fn run_estimation_grid(cfg: &ExperimentConfig) -> GridTable<EstimationRow> {
    run_estimation_grid_with(cfg, &DefaultEstimator::default())
}

/// Runs the configured grids and writes one CSV per grid into `dir`; returns the
/// summary lines.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let grids = cfg.grids()?;
    let mut summaries = Vec::new();
    let want_stats = grids.contains(&Grid::Statistics);
    let want_riae = grids.contains(&Grid::Riae);
    if want_stats || want_riae {
        let reports = run_cell_grid(
            cfg,
            CellOptions {
                simulate: true,
                riae: want_riae,
            },
        );
        if want_stats {
            let t = statistics_table(cfg, &reports);
            t.write_csv_file(&dir.join(Grid::Statistics.file_name()))?;
            summaries.push(t.summary(Grid::Statistics.as_str()));
        }
        if want_riae {
            let t = riae_table(&reports);
            t.write_csv_file(&dir.join(Grid::Riae.file_name()))?;
            summaries.push(t.summary(Grid::Riae.as_str()));
        }
    }
    if grids.contains(&Grid::Estimation) {
        let t = run_estimation_grid(cfg);
        t.write_csv_file(&dir.join(Grid::Estimation.file_name()))?;
        summaries.push(t.summary(Grid::Estimation.as_str()));
    }
    Ok(summaries)
}
