//! Estimation of the drift and diffusion coefficients from passage-time samples
//! when the threshold is known, and the error metrics used to assess the fits.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::fpt_law::{small_eps_mean, small_eps_var, FptLaw};
use crate::numerics::{find_root, integrate_with_breaks, Bracket, NelderMead, Tolerance, PENALTY};
use crate::scalar::Real;
use crate::simulator::{empirical_stats, EmpiricalCdf, FptSample};
use crate::thresholds::{CurvedThreshold, PiecewiseLinearThreshold, WienerParams};

/// Log-density assigned to an observation whose density underflows to zero.
pub const LOG_DENSITY_FLOOR: f64 = -1e10;
/// Upper tail of the model cdf still integrated by [`r_iae`].
pub const RIAE_TAIL: f64 = 1e-6;
/// `ε` up to which the small-ε moment estimate seeds the likelihood search.
pub const SMALL_EPS_INIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimationMethod {
    Mle,
    Me,
    MeEps,
}

impl EstimationMethod {
    pub const ALL: [EstimationMethod; 3] = [Self::Mle, Self::Me, Self::MeEps];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mle => "mle",
            Self::Me => "me",
            Self::MeEps => "me_eps",
        }
    }
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mle" => Ok(Self::Mle),
            "me" => Ok(Self::Me),
            "me_eps" => Ok(Self::MeEps),
            _ => Err(invalid("method", f64::NAN, "expected mle, me or me-eps")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEstimate<T> {
    pub mu_hat: T,
    pub sigma2_hat: T,
    pub method: EstimationMethod,
    pub objective_at_optimum: T,
    pub converged: bool,
}

impl<T: Real> PhiEstimate<T> {
    /// Process with the estimated coefficients and the start point of `template`.
    pub fn process(&self, template: &WienerParams<T>) -> Result<WienerParams<T>> {
        template.with_phi(self.mu_hat, self.sigma2_hat)
    }
}

/// Relative bias and mean squared relative error over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport<T> {
    pub r_me_mu: T,
    pub r_mse_mu: T,
    pub r_me_sigma2: T,
    pub r_mse_sigma2: T,
    pub r_iae: Option<T>,
}

fn uncensored<T: Real>(sample: &FptSample<T>, t0: T, needed: usize) -> Result<&[T]> {
    let times = sample.times();
    if times.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            got: times.len(),
        });
    }
    if let Some(&t) = times.iter().find(|&&t| !(t > t0)) {
        return Err(Error::Domain {
            t: t.as_f64(),
            t0: t0.as_f64(),
        });
    }
    Ok(times)
}

fn law_log_likelihood<T: Real>(law: &FptLaw<T>, times: &[T]) -> T {
    let floor = T::lit(LOG_DENSITY_FLOOR);
    times
        .iter()
        .map(|&t| {
            let p = law.pdf(t);
            if p > T::zero() {
                p.ln()
            } else {
                floor
            }
        })
        .sum()
}

/// Sum of log densities of the uncensored times under the two-piece threshold law.
pub fn log_likelihood<T: Real>(
    sample: &FptSample<T>,
    w: &WienerParams<T>,
    thr: &PiecewiseLinearThreshold<T>,
) -> Result<T> {
    let law = FptLaw::new(*w, *thr)?;
    let times = uncensored(sample, w.t0(), 1)?;
    Ok(law_log_likelihood(&law, times))
}

fn search<T: Real, F: Fn(&[T]) -> T>(
    objective: F,
    start: [T; 2],
    method: EstimationMethod,
) -> Result<PhiEstimate<T>> {
    let found = NelderMead::default().run(objective, &start, &Tolerance::simplex())?;
    Ok(PhiEstimate {
        mu_hat: found.point[0],
        sigma2_hat: found.point[1],
        method,
        objective_at_optimum: found.value,
        converged: found.converged,
    })
}

/// Maximizes the log-likelihood over `(μ, σ²)` starting from `init`; non-positive
/// coefficients score [`PENALTY`]. The reported objective is the maximized
/// log-likelihood.
pub fn mle<T: Real>(
    sample: &FptSample<T>,
    thr: &PiecewiseLinearThreshold<T>,
    init: &WienerParams<T>,
) -> Result<PhiEstimate<T>> {
    FptLaw::new(*init, *thr)?;
    let times = uncensored(sample, init.t0(), 1)?;
    let objective = |p: &[T]| match init.with_phi(p[0], p[1]).and_then(|w| FptLaw::new(w, *thr)) {
        Ok(law) => -law_log_likelihood(&law, times),
        Err(_) => T::lit(PENALTY),
    };
    let mut est = search(objective, [init.mu(), init.sigma2()], EstimationMethod::Mle)?;
    est.objective_at_optimum = -est.objective_at_optimum;
    Ok(est)
}

/// Mean and unbiased variance of `T − t0` over the uncensored times.
pub fn sample_moments<T: Real>(sample: &FptSample<T>) -> Result<(T, T)> {
    let st = empirical_stats(sample)?;
    Ok((st.moments.mean, st.moments.variance))
}

/// Moment matching against given first two moments of `T − t0`.
///
/// Minimizes `((E[T] − m)/m)² + ((E[T²] − s)/s)²` with `s = variance + mean²`;
/// parameters with `μ ≤ 0`, `σ² ≤ 0` or `μ ≤ β2` score [`PENALTY`].
pub fn match_moments<T: Real>(
    mean: T,
    variance: T,
    thr: &PiecewiseLinearThreshold<T>,
    init: &WienerParams<T>,
) -> Result<PhiEstimate<T>> {
    if !(mean > T::zero()) || !(variance >= T::zero()) {
        return Err(invalid("mean", mean.as_f64(), "moments must be positive"));
    }
    FptLaw::new(*init, *thr)?;
    let second = variance + mean * mean;
    let objective = |p: &[T]| {
        if !(p[0] > thr.beta2()) {
            return T::lit(PENALTY);
        }
        let m = init
            .with_phi(p[0], p[1])
            .and_then(|w| FptLaw::new(w, *thr))
            .and_then(|law| law.moments());
        match m {
            Ok(m) => {
                let r1 = (m.mean - mean) / mean;
                let r2 = (m.second_moment - second) / second;
                r1 * r1 + r2 * r2
            }
            Err(_) => T::lit(PENALTY),
        }
    };
    search(objective, [init.mu(), init.sigma2()], EstimationMethod::Me)
}

/// Moment estimator under the two-piece threshold law.
pub fn moment_estimate<T: Real>(
    sample: &FptSample<T>,
    thr: &PiecewiseLinearThreshold<T>,
    init: &WienerParams<T>,
) -> Result<PhiEstimate<T>> {
    uncensored(sample, init.t0(), 2)?;
    let (mean, variance) = sample_moments(sample)?;
    match_moments(mean, variance, thr, init)
}

/// Least-squares solution of the small-ε mean and variance equations.
pub fn small_eps_moment_estimate<T: Real>(
    sample: &FptSample<T>,
    th: &CurvedThreshold<T>,
    init: &WienerParams<T>,
) -> Result<PhiEstimate<T>> {
    uncensored(sample, init.t0(), 2)?;
    th.check_pairing(init)?;
    let (mean, variance) = sample_moments(sample)?;
    if !(variance > T::zero()) {
        return Err(Error::Degenerate("sample variance is zero"));
    }
    let objective = |p: &[T]| {
        let w = match init.with_phi(p[0], p[1]) {
            Ok(w) => w,
            Err(_) => return T::lit(PENALTY),
        };
        match (small_eps_mean(&w, th), small_eps_var(&w, th)) {
            (Ok(m), Ok(v)) => {
                let r1 = (m - mean) / mean;
                let r2 = (v - variance) / variance;
                r1 * r1 + r2 * r2
            }
            _ => T::lit(PENALTY),
        }
    };
    search(objective, [init.mu(), init.sigma2()], EstimationMethod::MeEps)
}

/// Inverse Gaussian moment inversion for a constant level `b`:
/// `μ = (b − x0)/mean`, `σ² = variance·μ³/(b − x0)`.
pub fn ig_moment_inversion<T: Real>(mean: T, variance: T, level: T, template: &WienerParams<T>) -> Result<WienerParams<T>> {
    let gap = level - template.x0();
    if !(gap > T::zero()) {
        return Err(invalid("level", level.as_f64(), "must exceed the start point"));
    }
    let mu = gap / mean;
    template.with_phi(mu, variance * mu * mu * mu / gap)
}

/// Starting point for the likelihood search: the small-ε moment estimate when
/// `ε ≤ 0.2`, otherwise inverse Gaussian inversion at the level `b0 + ε/2`.
pub fn default_initial_estimate<T: Real>(
    sample: &FptSample<T>,
    th: &CurvedThreshold<T>,
    template: &WienerParams<T>,
) -> Result<WienerParams<T>> {
    let (mean, variance) = sample_moments(sample)?;
    if !(variance > T::zero()) {
        return Err(Error::Degenerate("sample variance is zero"));
    }
    let level = th.b0() + th.eps() / T::lit(2.0);
    let ig = ig_moment_inversion(mean, variance, level, template)?;
    if th.eps() > T::lit(SMALL_EPS_INIT) {
        return Ok(ig);
    }
    let est = small_eps_moment_estimate(sample, th, &ig)?;
    match est.process(template) {
        Ok(w) if est.converged => Ok(w),
        _ => Ok(ig),
    }
}

/// `∫|F(t) − F_n(t)|dt / t̄` over `[t0, t_end]`, where `t_end` is past the largest
/// observation and far enough that `F(t_end) > 1 − 10⁻⁶`.
///
/// The empirical jumps are integration breakpoints, and each step is split again
/// where the model crosses the step height.
pub fn r_iae<T: Real, F: Fn(T) -> T>(model_cdf: F, sample: &FptSample<T>) -> Result<T> {
    let st = empirical_stats(sample)?;
    let t0 = sample.t0();
    let ecdf: &EmpiricalCdf<T> = &st.cdf;
    let jumps = ecdf.jumps();
    let last = jumps[jumps.len() - 1];

    let target = T::one() - T::lit(RIAE_TAIL);
    let mut end = last;
    let mut grow = 0;
    while model_cdf(end) <= target {
        end = t0 + (end - t0) * T::lit(2.0);
        grow += 1;
        if grow > 200 {
            return Err(Error::BracketFailure { cap: end.as_f64() });
        }
    }

    let tol = Tolerance::quadrature().with_abs(T::lit(1e-14)).with_rel(T::lit(1e-10));
    let root_tol = Tolerance::root().with_abs(T::tol_floor().max(T::lit(1e-14)));
    let n = T::lit(ecdf.n() as f64);
    let mut total = T::zero();
    let mut a = t0;
    let mut level = T::zero();
    let mut k = 0;
    let piece = |a: T, b: T, c: T| -> Result<T> {
        if !(b > a) {
            return Ok(T::zero());
        }
        let (fa, fb) = (model_cdf(a) - c, model_cdf(b) - c);
        let mut breaks = Vec::new();
        if fa < T::zero() && fb > T::zero() {
            if let Ok(br) = Bracket::new(a, b) {
                if let Ok(r) = find_root(|t| model_cdf(t) - c, br, &root_tol) {
                    breaks.push(r);
                }
            }
        }
        Ok(integrate_with_breaks(|t| (model_cdf(t) - c).abs(), a, b, &breaks, &tol)?.value)
    };
    while k < jumps.len() {
        let b = jumps[k];
        total = total + piece(a, b, level)?;
        while k < jumps.len() && jumps[k] == b {
            k += 1;
        }
        level = T::lit(k as f64) / n;
        a = b;
    }
    total = total + piece(a, end, level)?;
    Ok(total / st.moments.mean)
}

/// Relative bias and mean squared relative error of the estimates.
pub fn relative_errors<T: Real>(estimates: &[PhiEstimate<T>], truth: &WienerParams<T>) -> Result<ErrorReport<T>> {
    if estimates.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let n = T::lit(estimates.len() as f64);
    let rel = |hat: T, true_value: T| (hat - true_value) / true_value;
    let (mut me_mu, mut mse_mu, mut me_s2, mut mse_s2) = (T::zero(), T::zero(), T::zero(), T::zero());
    for e in estimates {
        let rm = rel(e.mu_hat, truth.mu());
        let rs = rel(e.sigma2_hat, truth.sigma2());
        me_mu = me_mu + rm;
        mse_mu = mse_mu + rm * rm;
        me_s2 = me_s2 + rs;
        mse_s2 = mse_s2 + rs * rs;
    }
    Ok(ErrorReport {
        r_me_mu: me_mu / n,
        r_mse_mu: mse_mu / n,
        r_me_sigma2: me_s2 / n,
        r_mse_sigma2: mse_s2 / n,
        r_iae: None,
    })
}
