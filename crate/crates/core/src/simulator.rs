//! Euler–Maruyama simulation of passage times through the curved threshold,
//! with a Brownian-bridge test for crossings between grid points.
//!
//! Stream `i` of a run seeded with `seed` is a ChaCha8 generator keyed by `seed`
//! and positioned on stream `i`, so every path is reproducible on its own and the
//! assembled sample does not depend on scheduling. Each step consumes exactly one
//! standard normal draw followed by one uniform draw on (0, 1).

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fpt_law::FptMoments;
use crate::scalar::Real;
use crate::thresholds::{CurvedThreshold, FitWindow, WienerParams};

pub const DEFAULT_DT: f64 = 1e-3;
/// Censoring cap as a multiple of the fit-window end.
pub const WINDOW_CAP_FACTOR: f64 = 20.0;
/// Exponents above this make the bridge probability smaller than any uniform draw can resolve.
const BRIDGE_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T> {
    dt: T,
    n_paths: usize,
    seed: u64,
    t_max: T,
}

impl<T: Real> SimConfig<T> {
    /// `t_max` is an absolute time; paths still below the threshold past it are censored.
    pub fn new(dt: T, n_paths: usize, seed: u64, t_max: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(invalid("dt", dt.as_f64(), "time step must be positive"));
        }
        if n_paths == 0 {
            return Err(invalid("n_paths", 0.0, "at least one path is required"));
        }
        if t_max.is_nan() {
            return Err(invalid("t_max", t_max.as_f64(), "must be a number"));
        }
        Ok(Self {
            dt,
            n_paths,
            seed,
            t_max,
        })
    }

    /// Cap at `t0 + 10⁶·dt`.
    pub fn with_default_cap(dt: T, n_paths: usize, seed: u64, t0: T) -> Result<Self> {
        Self::new(dt, n_paths, seed, t0 + dt * T::lit(1e6))
    }

    /// Cap at twenty window lengths past `t0`, measured to `τ*`.
    pub fn for_window(dt: T, n_paths: usize, seed: u64, win: &FitWindow<T>) -> Result<Self> {
        let t0 = win.t0();
        Self::new(dt, n_paths, seed, t0 + (win.tau_star() - t0) * T::lit(WINDOW_CAP_FACTOR))
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn with_dt(mut self, dt: T) -> Result<Self> {
        self.dt = dt;
        Self::new(dt, self.n_paths, self.seed, self.t_max)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n_paths(self, n_paths: usize) -> Result<Self> {
        Self::new(self.dt, n_paths, self.seed, self.t_max)
    }
}

/// Passage times indexed by stream; `None` marks a censored path.
#[derive(Debug, Clone, PartialEq)]
pub struct FptSample<T> {
    outcomes: Vec<Option<T>>,
    times: Vec<T>,
    t0: T,
    config: Option<SimConfig<T>>,
}

impl<T: Real> FptSample<T> {
    pub fn from_outcomes(outcomes: Vec<Option<T>>, t0: T, config: Option<SimConfig<T>>) -> Result<Self> {
        for t in outcomes.iter().flatten() {
            if !(*t > t0) || !t.is_finite() {
                return Err(invalid("time", t.as_f64(), "passage times must be finite and after t0"));
            }
        }
        let times = outcomes.iter().flatten().copied().collect();
        Ok(Self {
            outcomes,
            times,
            t0,
            config,
        })
    }

    /// Fully observed sample.
    pub fn from_times(times: Vec<T>, t0: T) -> Result<Self> {
        Self::from_outcomes(times.into_iter().map(Some).collect(), t0, None)
    }

    /// Uncensored times in stream order.
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn outcomes(&self) -> &[Option<T>] {
        &self.outcomes
    }

    pub fn censored_count(&self) -> usize {
        self.outcomes.len() - self.times.len()
    }

    /// Number of paths, censored ones included.
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn config(&self) -> Option<&SimConfig<T>> {
        self.config.as_ref()
    }

    /// Writes `stream_index,fpt` rows; censored paths get an empty `fpt` field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["stream_index", "fpt"]).map_err(csv_error)?;
        for (i, t) in self.outcomes.iter().enumerate() {
            let field = t.map(|v| v.to_string()).unwrap_or_default();
            wtr.write_record([i.to_string(), field]).map_err(csv_error)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Self::write_csv`]. Rows are kept in file order.
    pub fn read_csv<R: Read>(input: R, t0: T) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers().map_err(csv_error)?.clone();
        if header.len() != 2 || &header[0] != "stream_index" || &header[1] != "fpt" {
            return Err(Error::Format {
                record: 0,
                reason: "expected header `stream_index,fpt`".into(),
            });
        }
        let mut outcomes = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row.map_err(csv_error)?;
            let record = k + 1;
            row[0].parse::<u64>().map_err(|e| Error::Format {
                record,
                reason: format!("stream index: {e}"),
            })?;
            let field = &row[1];
            if field.is_empty() {
                outcomes.push(None);
            } else {
                let v: f64 = field.parse().map_err(|e| Error::Format {
                    record,
                    reason: format!("passage time: {e}"),
                })?;
                outcomes.push(Some(T::lit(v)));
            }
        }
        Self::from_outcomes(outcomes, t0, None)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let record = e.position().map_or(0, |p| p.record() as usize);
    Error::Format {
        record,
        reason: e.to_string(),
    }
}

/// Probability that a Brownian bridge from `x_i` to `x_next` over a step of length
/// `dt` touched the level `b_next`: `exp(−2(b − x_i)(b − x_next)/(σ²Δs))`.
///
/// Returns values of at least one when either endpoint is at or above the level.
#[inline]
pub fn bridge_crossing_prob<T: Real>(sigma2: T, dt: T, b_next: T, x_i: T, x_next: T) -> T {
    (-T::lit(2.0) * (b_next - x_i) * (b_next - x_next) / (sigma2 * dt)).exp()
}

fn validate<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>, cfg: &SimConfig<T>) -> Result<()> {
    th.check_pairing(w)?;
    if !(cfg.t_max > w.t0()) {
        return Err(invalid("t_max", cfg.t_max.as_f64(), "censoring cap must follow t0"));
    }
    Ok(())
}

fn run_path<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>, cfg: &SimConfig<T>, stream: u64) -> Option<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let dt = cfg.dt;
    let half = dt / T::lit(2.0);
    let drift = w.mu() * dt;
    let sd = (w.sigma2() * dt).sqrt();
    let scale = T::lit(2.0) / (w.sigma2() * dt);
    let ratio = (-th.lambda() * dt).exp();
    let cutoff = T::lit(BRIDGE_CUTOFF);

    let mut decay = th.eps();
    let mut x = w.x0();
    let mut step: u64 = 0;
    loop {
        let s = w.t0() + dt * T::lit(step as f64);
        let s_next = w.t0() + dt * T::lit((step + 1) as f64);
        if s_next > cfg.t_max {
            return None;
        }
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.sample(Open01);
        let x_next = x + drift + sd * T::lit(z);
        decay = decay * ratio;
        let b_next = th.b0() + decay;
        if x_next >= b_next {
            return Some(s_next);
        }
        let exponent = scale * (b_next - x) * (b_next - x_next);
        if exponent < cutoff && (-exponent).exp() > T::lit(u) {
            return Some(s + half);
        }
        x = x_next;
        step += 1;
    }
}

/// One passage time for stream `stream_index`, or `None` if censored at `t_max`.
pub fn simulate_fpt<T: Real>(
    w: &WienerParams<T>,
    th: &CurvedThreshold<T>,
    cfg: &SimConfig<T>,
    stream_index: u64,
) -> Result<Option<T>> {
    validate(w, th, cfg)?;
    Ok(run_path(w, th, cfg, stream_index))
}

/// Streams `0..n_paths` simulated in parallel and assembled in stream order.
pub fn simulate_sample<T: Real>(
    w: &WienerParams<T>,
    th: &CurvedThreshold<T>,
    cfg: &SimConfig<T>,
) -> Result<FptSample<T>> {
    validate(w, th, cfg)?;
    let outcomes: Vec<Option<T>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(w, th, cfg, i))
        .collect();
    FptSample::from_outcomes(outcomes, w.t0(), Some(*cfg))
}

/// Right-continuous step function `F_n(t) = #{T_i ≤ t}/n`, where `n` counts
/// censored paths too.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf<T> {
    sorted: Vec<T>,
    n: usize,
}

impl<T: Real> EmpiricalCdf<T> {
    pub fn new(sample: &FptSample<T>) -> Self {
        let mut sorted = sample.times().to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite passage times"));
        Self {
            sorted,
            n: sample.len(),
        }
    }

    pub fn eval(&self, t: T) -> T {
        let k = self.sorted.partition_point(|&x| x <= t);
        T::lit(k as f64) / T::lit(self.n as f64)
    }

    /// Uncensored times in increasing order.
    pub fn jumps(&self) -> &[T] {
        &self.sorted
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats<T> {
    /// Moments of `T − t0`; `total_mass` is the uncensored fraction.
    pub moments: FptMoments<T>,
    pub cdf: EmpiricalCdf<T>,
}

/// Sample mean, unbiased variance and CV of the uncensored times, plus the empirical cdf.
pub fn empirical_stats<T: Real>(sample: &FptSample<T>) -> Result<EmpiricalStats<T>> {
    let times = sample.times();
    if times.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: times.len(),
        });
    }
    let n = T::lit(times.len() as f64);
    let t0 = sample.t0();
    let mean = times.iter().map(|&t| t - t0).sum::<T>() / n;
    let ss = times
        .iter()
        .map(|&t| {
            let d = t - t0 - mean;
            d * d
        })
        .sum::<T>();
    let variance = ss / (n - T::one());
    let mass = n / T::lit(sample.len() as f64);
    Ok(EmpiricalStats {
        moments: FptMoments::from_mean_variance(mean, variance, mass),
        cdf: EmpiricalCdf::new(sample),
    })
}
