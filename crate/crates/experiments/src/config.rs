//! Experiment configuration, read from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use fpt_core::{EstimationMethod, FitMethod};
use serde::{Deserialize, Serialize};

use crate::ExperimentError;

pub const PAPER_SIGMA2: [f64; 3] = [0.2, 0.4, 1.0];
pub const PAPER_EPS: [f64; 6] = [0.05, 0.1, 0.2, 1.0, 5.0, 10.0];
pub const PAPER_LAMBDA: [f64; 10] = [0.02, 0.04, 0.08, 0.15, 0.30, 0.60, 1.00, 3.00, 5.00, 10.00];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "one")]
    pub mu: f64,
    pub sigma2: Vec<f64>,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdBlock {
    #[serde(default = "one")]
    pub b0: f64,
    pub eps: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Paths per cell for the statistics and R_IAE grids.
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Repetitions per cell for the estimation grid.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Observations per repetition for the estimation grid.
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    #[serde(default = "default_fit_method")]
    pub method: String,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_grids")]
    pub grids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub threshold: ThresholdBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub fit: FitBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_paths() -> usize {
    100_000
}
fn default_repetitions() -> usize {
    200
}
fn default_sample_size() -> usize {
    100
}
fn default_fit_method() -> String {
    "free".into()
}
fn default_lower() -> f64 {
    0.005
}
fn default_upper() -> f64 {
    0.995
}
fn default_estimators() -> Vec<String> {
    EstimationMethod::ALL.iter().map(|m| m.as_str().to_string()).collect()
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_grids() -> Vec<String> {
    Grid::ALL.iter().map(|g| g.as_str().to_string()).collect()
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            n_paths: default_paths(),
            repetitions: default_repetitions(),
            sample_size: default_sample_size(),
            seed: 0,
        }
    }
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            method: default_fit_method(),
            lower: default_lower(),
            upper: default_upper(),
            estimators: default_estimators(),
        }
    }
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            grids: default_grids(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    Statistics,
    Estimation,
    Riae,
}

impl Grid {
    pub const ALL: [Grid; 3] = [Grid::Statistics, Grid::Estimation, Grid::Riae];

    pub fn as_str(&self) -> &'static str {
        match self {
            Grid::Statistics => "statistics",
            Grid::Estimation => "estimation",
            Grid::Riae => "riae",
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.as_str())
    }
}

/// One point of the parameter grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub sigma2: f64,
    pub eps: f64,
    pub lambda: f64,
}

impl ExperimentConfig {
    /// Desk-scale version of the published simulation study.
    pub fn paper_grid() -> Self {
        Self {
            model: ModelBlock {
                mu: 1.0,
                sigma2: PAPER_SIGMA2.to_vec(),
                x0: 0.0,
                t0: 0.0,
            },
            threshold: ThresholdBlock {
                b0: 1.0,
                eps: PAPER_EPS.to_vec(),
                lambda: PAPER_LAMBDA.to_vec(),
            },
            sim: SimBlock::default(),
            fit: FitBlock::default(),
            output: OutputBlock::default(),
        }
    }

    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: &str| Err(ExperimentError::Config(msg.to_string()));
        if self.model.sigma2.is_empty() || self.threshold.eps.is_empty() || self.threshold.lambda.is_empty() {
            return bad("sigma2, eps and lambda lists must be nonempty");
        }
        if !(self.model.mu > 0.0) || self.model.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("mu and every sigma2 must be positive");
        }
        if self.threshold.eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return bad("every eps must be non-negative");
        }
        if self.threshold.lambda.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return bad("every lambda must be non-negative");
        }
        if !(self.threshold.b0 > self.model.x0) {
            return bad("b0 must exceed x0");
        }
        if !(self.sim.dt > 0.0) || self.sim.n_paths < 2 || self.sim.repetitions < 1 || self.sim.sample_size < 2 {
            return bad("need dt > 0, n_paths >= 2, repetitions >= 1 and sample_size >= 2");
        }
        if !(0.0 < self.fit.lower && self.fit.lower < self.fit.upper && self.fit.upper < 1.0) {
            return bad("window probabilities must satisfy 0 < lower < upper < 1");
        }
        self.fit_method()?;
        self.estimators()?;
        self.grids()?;
        Ok(())
    }

    pub fn fit_method(&self) -> Result<FitMethod, ExperimentError> {
        self.fit.method.parse().map_err(|e: fpt_core::Error| ExperimentError::Config(e.to_string()))
    }

    pub fn estimators(&self) -> Result<Vec<EstimationMethod>, ExperimentError> {
        if self.fit.estimators.is_empty() {
            return Err(ExperimentError::Config("estimator list must be nonempty".into()));
        }
        self.fit
            .estimators
            .iter()
            .map(|s| s.parse().map_err(|e: fpt_core::Error| ExperimentError::Config(e.to_string())))
            .collect()
    }

    pub fn grids(&self) -> Result<Vec<Grid>, ExperimentError> {
        self.output
            .grids
            .iter()
            .map(|s| {
                Grid::ALL
                    .into_iter()
                    .find(|g| g.as_str() == s.as_str())
                    .ok_or_else(|| ExperimentError::Config(format!("unknown grid `{s}`")))
            })
            .collect()
    }

    /// Cartesian product in `sigma2`, `eps`, `lambda` order, `lambda` varying fastest.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &sigma2 in &self.model.sigma2 {
            for &eps in &self.threshold.eps {
                for &lambda in &self.threshold.lambda {
                    out.push(Cell {
                        index: out.len(),
                        sigma2,
                        eps,
                        lambda,
                    });
                }
            }
        }
        out
    }
}
