//! Passage-time law of drifted Brownian motion through linear and continuous
//! two-piece linear thresholds.
//!
//! Passage times are measured from the start time `t0` in the moment and
//! tabulation routines; densities and distribution functions take absolute time.

use crate::error::{invalid, Error, Result};
use crate::numerics::{ig_quantile, integrate_with_breaks, log_normal_cdf, normal_cdf, Tolerance};
use crate::scalar::Real;
use crate::thresholds::{CurvedThreshold, PiecewiseLinearThreshold, WienerParams};

/// Probability mass allowed beyond the moment truncation time.
pub const TAIL_MASS: f64 = 1e-10;

/// First two moments of a passage time, measured from `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptMoments<T> {
    pub mean: T,
    pub second_moment: T,
    pub variance: T,
    pub cv: T,
    pub total_mass: T,
}

impl<T: Real> FptMoments<T> {
    pub fn from_mean_variance(mean: T, variance: T, total_mass: T) -> Self {
        Self {
            mean,
            second_moment: variance + mean * mean,
            variance,
            cv: variance.max(T::zero()).sqrt() / mean,
            total_mass,
        }
    }
}

fn law_tolerance<T: Real>() -> Tolerance<T> {
    Tolerance::quadrature()
        .with_abs(T::tol_floor().max(T::lit(1e-13)))
        .with_rel(T::tol_floor().max(T::lit(1e-11)))
        .with_max_iter(5000)
}

fn check_start<T: Real>(w: &WienerParams<T>, alpha: T) -> Result<()> {
    if !(alpha > w.x0()) {
        return Err(Error::AboveThreshold {
            t: w.t0().as_f64(),
            level: w.x0().as_f64(),
            threshold: alpha.as_f64(),
        });
    }
    Ok(())
}

/// Log-density of the passage time through the line `α + β(t − t0)`, for elapsed time `s > 0`.
#[inline]
fn linear_log_pdf<T: Real>(w: &WienerParams<T>, gap: T, beta: T, s: T) -> T {
    let two = T::lit(2.0);
    let dev = gap - (w.mu() - beta) * s;
    gap.ln() - T::lit(0.5) * (two * T::PI() * w.sigma2()).ln() - T::lit(1.5) * s.ln()
        - dev * dev / (two * w.sigma2() * s)
}

/// Density of the passage time through `c(t) = α + β(t − t0)`.
///
/// This is the inverse Gaussian IG((α − x0)/(μ − β), (α − x0)²/σ²) when μ > β; for
/// μ ≤ β the same expression is a defective density with mass below one.
pub fn linear_fpt_pdf<T: Real>(w: &WienerParams<T>, alpha: T, beta: T, t: T) -> Result<T> {
    check_start(w, alpha)?;
    let s = t - w.t0();
    if !(s > T::zero()) || s.is_infinite() {
        return Ok(T::zero());
    }
    Ok(linear_log_pdf(w, alpha - w.x0(), beta, s).exp())
}

/// Distribution function of the passage time through `α + β(t − t0)`, valid for
/// any sign of the effective drift `μ − β`.
pub fn linear_fpt_cdf<T: Real>(w: &WienerParams<T>, alpha: T, beta: T, t: T) -> Result<T> {
    check_start(w, alpha)?;
    let s = t - w.t0();
    if !(s > T::zero()) {
        return Ok(T::zero());
    }
    let gap = alpha - w.x0();
    let nu = w.mu() - beta;
    if s.is_infinite() {
        return Ok(if nu >= T::zero() {
            T::one()
        } else {
            (T::lit(2.0) * nu * gap / w.sigma2()).exp()
        });
    }
    let scale = w.sigma() * s.sqrt();
    let direct = normal_cdf((nu * s - gap) / scale);
    let k = T::lit(2.0) * nu * gap / w.sigma2();
    let z = (-nu * s - gap) / scale;
    let image = if k <= T::lit(700.0) {
        k.exp() * normal_cdf(z)
    } else {
        (k + log_normal_cdf(z)).exp()
    };
    Ok((direct + image).min(T::one()))
}

/// Joint sub-density of the path at the given `(time, level)` points, killed at the
/// first crossing of `thr`.
///
/// Each factor is the Gaussian transition kernel times the image-term correction
/// `1 − exp(−2(c_i − x_i)(c_{i−1} − x_{i−1}) / (σ²Δt))`, which is exact when the
/// threshold is linear between consecutive points. One or two points are supported,
/// and the knot `t1` must not fall strictly inside any inter-point interval.
pub fn constrained_transition_density<T: Real>(
    w: &WienerParams<T>,
    thr: &PiecewiseLinearThreshold<T>,
    points: &[(T, T)],
) -> Result<T> {
    if points.is_empty() || points.len() > 2 {
        return Err(invalid("points", points.len() as f64, "one or two points are supported"));
    }
    check_start(w, thr.alpha1())?;
    let mut prev = (w.t0(), w.x0());
    let mut density = T::one();
    for &(t, x) in points {
        if !(t > prev.0) {
            return Err(Error::Ordering("times must increase strictly from t0"));
        }
        if prev.0 < thr.t1() && thr.t1() < t {
            return Err(Error::Ordering("threshold knot falls inside an inter-point interval"));
        }
        let c = thr.level(t);
        if x > c {
            return Err(Error::AboveThreshold {
                t: t.as_f64(),
                level: x.as_f64(),
                threshold: c.as_f64(),
            });
        }
        let dt = t - prev.0;
        let var = w.sigma2() * dt;
        let c_prev = thr.level(prev.0);
        let survive = -(-T::lit(2.0) * (c - x) * (c_prev - prev.1) / var).exp_m1();
        let dev = x - prev.1 - w.mu() * dt;
        let kernel = (-dev * dev / (T::lit(2.0) * var)).exp() / (T::lit(2.0) * T::PI() * var).sqrt();
        density = density * survive * kernel;
        prev = (t, x);
    }
    Ok(density)
}

/// Passage-time law for a continuous two-piece linear threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptLaw<T> {
    w: WienerParams<T>,
    thr: PiecewiseLinearThreshold<T>,
}

impl<T: Real> FptLaw<T> {
    pub fn new(w: WienerParams<T>, thr: PiecewiseLinearThreshold<T>) -> Result<Self> {
        check_start(&w, thr.alpha1())?;
        if w.t0() != thr.t0() {
            return Err(Error::Ordering("process and threshold must share the start time"));
        }
        Ok(Self { w, thr })
    }

    pub fn process(&self) -> &WienerParams<T> {
        &self.w
    }

    pub fn threshold(&self) -> &PiecewiseLinearThreshold<T> {
        &self.thr
    }

    /// Density at absolute time `t`: the inverse Gaussian for the first line up to
    /// `t1`, then the closed form obtained by integrating the second-line passage
    /// density against the killed transition density at `t1`.
    pub fn pdf(&self, t: T) -> T {
        let (w, thr) = (&self.w, &self.thr);
        let s = t - w.t0();
        if !(s > T::zero()) || s.is_infinite() {
            return T::zero();
        }
        if t <= thr.t1() {
            return linear_log_pdf(w, thr.alpha1() - w.x0(), thr.beta1(), s).exp();
        }
        let two = T::lit(2.0);
        let sigma2 = w.sigma2();
        let (a1, a2, b2) = (thr.alpha1(), thr.alpha2(), thr.beta2());
        let s1 = thr.t1() - w.t0();
        let u = t - thr.t1();
        let x0 = w.x0();

        let dev = a2 - x0 - (w.mu() - b2) * u - w.mu() * s1;
        let log_base = -dev * dev / (two * sigma2 * s) - T::lit(0.5) * (two * T::PI() * sigma2).ln()
            - T::lit(1.5) * s.ln();
        let c = u.sqrt() / (sigma2 * s1 * s).sqrt();
        let direct_gap = a2 - x0 - b2 * s1;
        let image_gap = a2 + x0 - b2 * s1 - two * a1;
        let image_exponent = -two * u * (a1 - x0) * (a2 - a1 - b2 * s1) / (sigma2 * s1 * s);

        let direct = direct_gap * (log_base + log_normal_cdf(direct_gap * c)).exp();
        let image = image_gap * (log_base + image_exponent + log_normal_cdf(image_gap * c)).exp();
        (direct - image).max(T::zero())
    }

    /// `P(T ≤ t)`: closed form on the first line, quadrature of [`Self::pdf`] after `t1`.
    pub fn cdf(&self, t: T) -> Result<T> {
        let (w, thr) = (&self.w, &self.thr);
        if !(t > w.t0()) {
            return Ok(T::zero());
        }
        let first = linear_fpt_cdf(w, thr.alpha1(), thr.beta1(), t.min(thr.t1()))?;
        if t <= thr.t1() {
            return Ok(first);
        }
        let rest = integrate_with_breaks(|s| self.pdf(s), thr.t1(), t, &[], &law_tolerance())?;
        Ok(first + rest.value)
    }

    /// Absolute time beyond which at most `tail` probability remains.
    ///
    /// Uses the line `α_hi + β_hi(t − t0)` lying above both pieces, whose inverse
    /// Gaussian passage time dominates this one; falls back to doubling on the
    /// distribution function when that line never gets crossed surely.
    pub fn truncation_time(&self, tail: T) -> Result<T> {
        let (w, thr) = (&self.w, &self.thr);
        if !(w.mu() > thr.beta2()) {
            return Err(invalid("beta2", thr.beta2().as_f64(), "moments need mu > beta2"));
        }
        let s1 = thr.t1() - w.t0();
        let beta_hi = thr.beta1().max(thr.beta2());
        if w.mu() > beta_hi {
            let alpha_hi = thr.alpha1().max(thr.alpha2() - beta_hi * s1);
            let gap = alpha_hi - w.x0();
            let q = ig_quantile(
                T::one() - tail,
                gap / (w.mu() - beta_hi),
                gap * gap / w.sigma2(),
                &Tolerance::quantile().with_abs(tail / T::lit(10.0)),
            )?;
            return Ok(w.t0() + q.max(s1));
        }
        let second_gap = (thr.alpha2() - w.x0()).abs() + T::one();
        let mut horizon = s1 + second_gap / (w.mu() - thr.beta2());
        for _ in 0..80 {
            let total = self.cdf(w.t0() + horizon)?;
            if T::one() - total <= tail {
                return Ok(w.t0() + horizon);
            }
            horizon = horizon + horizon;
        }
        Err(Error::NoConvergence {
            routine: "truncation_time",
            iterations: 80,
        })
    }

    /// Mean, second moment, variance and CV of `T − t0` by quadrature up to the
    /// truncation time; requires `μ > β2`.
    pub fn moments(&self) -> Result<FptMoments<T>> {
        let end = self.truncation_time(T::lit(TAIL_MASS))?;
        let t0 = self.w.t0();
        let breaks = [self.thr.t1()];
        let tol = law_tolerance();
        let mass = integrate_with_breaks(|t| self.pdf(t), t0, end, &breaks, &tol)?.value;
        let m1 = integrate_with_breaks(|t| (t - t0) * self.pdf(t), t0, end, &breaks, &tol)?.value;
        let m2 = integrate_with_breaks(
            |t| {
                let s = t - t0;
                s * s * self.pdf(t)
            },
            t0,
            end,
            &breaks,
            &tol,
        )?
        .value;
        let variance = m2 - m1 * m1;
        Ok(FptMoments {
            mean: m1,
            second_moment: m2,
            variance,
            cv: variance.max(T::zero()).sqrt() / m1,
            total_mass: mass,
        })
    }

    /// Distribution function tabulated on `[t0, end]` for fast repeated lookup.
    pub fn tabulate(&self, end: T, panels: usize) -> Result<TabulatedCdf<T>> {
        let t0 = self.w.t0();
        if !(end > t0) {
            return Err(Error::Ordering("tabulation end must follow t0"));
        }
        let panels = panels.max(2);
        let h = (end - t0) / T::lit(panels as f64);
        let mut nodes: Vec<T> = (0..=panels).map(|i| t0 + h * T::lit(i as f64)).collect();
        nodes[panels] = end;
        if self.thr.t1() > t0 && self.thr.t1() < end {
            nodes.push(self.thr.t1());
            nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
            nodes.dedup();
        }
        let tol = law_tolerance();
        let mut cdf = Vec::with_capacity(nodes.len());
        let mut pdf = Vec::with_capacity(nodes.len());
        let mut acc = T::zero();
        for (i, &t) in nodes.iter().enumerate() {
            if i > 0 {
                let q = integrate_with_breaks(|s| self.pdf(s), nodes[i - 1], t, &[], &tol)?;
                acc = acc + q.value;
            }
            cdf.push(acc);
            pdf.push(self.pdf(t));
        }
        Ok(TabulatedCdf { nodes, cdf, pdf })
    }
}

/// Piecewise cubic Hermite interpolant of a distribution function, using the
/// density as the node derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf<T> {
    nodes: Vec<T>,
    cdf: Vec<T>,
    pdf: Vec<T>,
}

impl<T: Real> TabulatedCdf<T> {
    pub fn start(&self) -> T {
        self.nodes[0]
    }

    pub fn end(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    /// Mass accumulated over the table.
    pub fn total(&self) -> T {
        self.cdf[self.cdf.len() - 1]
    }

    /// Interpolated value; constant outside the tabulated range.
    pub fn eval(&self, t: T) -> T {
        if t <= self.start() {
            return self.cdf[0];
        }
        if t >= self.end() {
            return self.total();
        }
        let i = self.nodes.partition_point(|&x| x <= t) - 1;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        let h = b - a;
        let x = (t - a) / h;
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let x2 = x * x;
        let x3 = x2 * x;
        let h00 = two * x3 - three * x2 + T::one();
        let h10 = x3 - two * x2 + x;
        let h01 = -two * x3 + three * x2;
        let h11 = x3 - x2;
        let v = h00 * self.cdf[i] + h10 * h * self.pdf[i] + h01 * self.cdf[i + 1] + h11 * h * self.pdf[i + 1];
        v.max(self.cdf[i]).min(self.cdf[i + 1])
    }
}

pub fn piecewise_fpt_pdf<T: Real>(w: &WienerParams<T>, thr: &PiecewiseLinearThreshold<T>, t: T) -> Result<T> {
    Ok(FptLaw::new(*w, *thr)?.pdf(t))
}

pub fn piecewise_fpt_cdf<T: Real>(w: &WienerParams<T>, thr: &PiecewiseLinearThreshold<T>, t: T) -> Result<T> {
    FptLaw::new(*w, *thr)?.cdf(t)
}

pub fn fpt_moments<T: Real>(w: &WienerParams<T>, thr: &PiecewiseLinearThreshold<T>) -> Result<FptMoments<T>> {
    FptLaw::new(*w, *thr)?.moments()
}

fn small_eps_check<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>) -> Result<()> {
    if !(th.b0() > w.x0()) {
        return Err(Error::AboveThreshold {
            t: w.t0().as_f64(),
            level: w.x0().as_f64(),
            threshold: th.b0().as_f64(),
        });
    }
    Ok(())
}

/// `exp(b0(μ − √(μ² + 2λσ²))/σ²)` and the square root it contains.
fn decay_factor<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>) -> (T, T) {
    let root = (w.mu() * w.mu() + T::lit(2.0) * th.lambda() * w.sigma2()).sqrt();
    ((th.b0() * (w.mu() - root) / w.sigma2()).exp(), root)
}

/// First-order-in-ε approximation of the mean passage time to the curved threshold:
/// `b0/μ + (ε/μ)·exp(b0(μ − √(μ² + 2λσ²))/σ²)`.
pub fn small_eps_mean<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>) -> Result<T> {
    small_eps_check(w, th)?;
    let (factor, _) = decay_factor(w, th);
    Ok(th.b0() / w.mu() + th.eps() / w.mu() * factor)
}

/// First-order-in-ε approximation of the passage-time variance with `θ0 = b0`.
pub fn small_eps_var<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>) -> Result<T> {
    small_eps_var_with(w, th, th.b0())
}

/// Small-ε variance with an explicit `θ0`:
///
/// `b0σ²/μ³ + σ²ε(b0 − 1)/μ³ + (2ε/μ²)(μb0/√(μ² + 2λσ²) + σ²/(2μ) − θ0)·exp(b0(μ − √(μ² + 2λσ²))/σ²)`.
///
/// The expression is kept exactly as published, including the `(b0 − 1)` term,
/// which is not dimensionally homogeneous; it is meaningful for `b0` in units
/// where the reference level is one.
pub fn small_eps_var_with<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>, theta0: T) -> Result<T> {
    small_eps_check(w, th)?;
    let (factor, root) = decay_factor(w, th);
    let (mu, s2, b0, eps) = (w.mu(), w.sigma2(), th.b0(), th.eps());
    let mu3 = mu * mu * mu;
    let base = b0 * s2 / mu3 + s2 * eps / mu3 * (b0 - T::one());
    let bracket = mu * b0 / root + s2 / (T::lit(2.0) * mu) - theta0;
    Ok(base + T::lit(2.0) * eps / (mu * mu) * bracket * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ig_pdf;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gaussian_kernel(mean: f64, var: f64, x: f64) -> f64 {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    fn std_w(mu: f64, s2: f64) -> WienerParams<f64> {
        WienerParams::standard(mu, s2).unwrap()
    }

    #[test]
    fn linear_pdf_values() {
        let w = std_w(1.0, 1.0);
        assert_relative_eq!(
            linear_fpt_pdf(&w, 1.0, 0.0, 1.0).unwrap(),
            1.0 / (2.0 * PI).sqrt(),
            max_relative = 1e-14
        );
        assert_eq!(linear_fpt_pdf(&w, 1.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(linear_fpt_pdf(&w, 1.0, 0.0, -2.0).unwrap(), 0.0);
        assert!(linear_fpt_pdf(&w, 0.0, 0.0, 1.0).is_err());
        let w = std_w(1.0, 0.2);
        assert_relative_eq!(
            linear_fpt_pdf(&w, 1.0, -1.0, 0.5).unwrap(),
            ig_pdf(0.5, 0.5, 5.0).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn linear_cdf_defective_mass() {
        let w = std_w(1.0, 0.5);
        // effective drift −1: mass exp(2·ν·gap/σ²) = exp(−4)
        let total = linear_fpt_cdf(&w, 1.0, 2.0, f64::INFINITY).unwrap();
        assert_relative_eq!(total, (-4.0_f64).exp(), max_relative = 1e-14);
        let late = linear_fpt_cdf(&w, 1.0, 2.0, 1e3).unwrap();
        assert_relative_eq!(late, total, max_relative = 1e-10);
    }

    #[test]
    fn constrained_density_single_point() {
        let w = std_w(1.0, 1.0);
        let thr = PiecewiseLinearThreshold::linear(2.0, 0.0, 0.0);
        let p = constrained_transition_density(&w, &thr, &[(1.0, 1.0)]).unwrap();
        assert_relative_eq!(p, 0.391_635_397_656_151_9, max_relative = 1e-14);
        // absorbed exactly at the threshold
        assert_eq!(constrained_transition_density(&w, &thr, &[(1.0, 2.0)]).unwrap(), 0.0);
        assert!(constrained_transition_density(&w, &thr, &[(1.0, 2.5)]).is_err());
        // far from the threshold the killing factor disappears
        let far = PiecewiseLinearThreshold::linear(60.0, 0.0, 0.0);
        let q = constrained_transition_density(&w, &far, &[(1.0, 0.3)]).unwrap();
        assert_relative_eq!(q, gaussian_kernel(1.0, 1.0, 0.3), max_relative = 1e-12);
    }

    #[test]
    fn constrained_density_two_points_and_errors() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        let p = constrained_transition_density(&w, &thr, &[(1.0, 0.5), (1.5, 0.7)]).unwrap();
        let first = constrained_transition_density(&w, &thr, &[(1.0, 0.5)]).unwrap();
        assert!(p > 0.0 && p.is_finite() && first > 0.0);
        assert!(constrained_transition_density(&w, &thr, &[(1.5, 0.5)]).is_err());
        assert!(constrained_transition_density(&w, &thr, &[(1.0, 0.5), (0.8, 0.5)]).is_err());
        assert!(constrained_transition_density(&w, &thr, &[]).is_err());
    }

    #[test]
    fn piecewise_pdf_first_branch_is_linear() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        for &t in &[0.05, 0.3, 0.7, 1.0] {
            assert_eq!(
                piecewise_fpt_pdf(&w, &thr, t).unwrap(),
                linear_fpt_pdf(&w, 2.0, -1.0, t).unwrap()
            );
        }
        assert!(piecewise_fpt_pdf(&w, &PiecewiseLinearThreshold::linear(-1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn piecewise_pdf_second_branch_value() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        // mpmath quadrature of the second-line density against the killed transition density
        assert_relative_eq!(
            piecewise_fpt_pdf(&w, &thr, 1.5).unwrap(),
            0.323_616_712_688_526_1,
            max_relative = 1e-12
        );
    }

    #[test]
    fn piecewise_pdf_is_continuous_at_knot() {
        let w = std_w(1.0, 0.4);
        let thr = PiecewiseLinearThreshold::new(3.0, -2.0, -0.3, 0.8, 0.0).unwrap();
        let law = FptLaw::new(w, thr).unwrap();
        assert_relative_eq!(law.pdf(0.8), law.pdf(0.8 + 1e-12), max_relative = 1e-5);
    }

    #[test]
    fn cdf_limits() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        assert_eq!(piecewise_fpt_cdf(&w, &thr, 0.0).unwrap(), 0.0);
        let far = piecewise_fpt_cdf(&w, &thr, 30.0).unwrap();
        assert_abs_diff_eq!(far, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        let law = FptLaw::new(w, thr).unwrap();
        let h = 1e-4;
        for &t in &[0.4, 0.8, 1.2, 1.5, 2.5] {
            let d = (law.cdf(t + h).unwrap() - law.cdf(t - h).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(d, law.pdf(t), epsilon = 1e-5);
        }
    }

    #[test]
    fn constant_threshold_moments() {
        let w = std_w(1.0, 0.2);
        let m = fpt_moments(&w, &PiecewiseLinearThreshold::linear(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(m.mean, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m.variance, 0.2, epsilon = 1e-8);
        assert_abs_diff_eq!(m.cv, 0.2_f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(m.total_mass, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_threshold_moments() {
        let w = std_w(1.0, 0.3);
        let thr = PiecewiseLinearThreshold::new(1.5, -0.5, -0.5, 2.0, 0.0).unwrap();
        let m = fpt_moments(&w, &thr).unwrap();
        assert_relative_eq!(m.mean, 1.5 / 1.5, max_relative = 1e-8);
        assert_relative_eq!(m.variance, 1.5 * 0.3 / 1.5_f64.powi(3), max_relative = 1e-7);
    }

    #[test]
    fn moments_need_positive_effective_drift() {
        let w = std_w(1.0, 0.3);
        let thr = PiecewiseLinearThreshold::new(1.5, -0.5, 1.5, 2.0, 0.0).unwrap();
        assert!(fpt_moments(&w, &thr).is_err());
    }

    #[test]
    fn moments_with_rising_first_piece() {
        // β1 ≥ μ > β2 exercises the doubling fallback of the truncation time
        let w = std_w(1.0, 0.3);
        let thr = PiecewiseLinearThreshold::new(1.0, 1.2, -0.5, 0.5, 0.0).unwrap();
        let m = fpt_moments(&w, &thr).unwrap();
        assert_abs_diff_eq!(m.total_mass, 1.0, epsilon = 1e-6);
        assert!(m.variance > 0.0);
    }

    #[test]
    fn tabulated_cdf_tracks_direct_cdf() {
        let w = std_w(1.0, 0.2);
        let thr = PiecewiseLinearThreshold::new(2.0, -1.0, -0.2, 1.0, 0.0).unwrap();
        let law = FptLaw::new(w, thr).unwrap();
        let table = law.tabulate(6.0, 3000).unwrap();
        for &t in &[0.2, 0.77, 1.0, 1.33, 2.9, 5.5] {
            assert_abs_diff_eq!(table.eval(t), law.cdf(t).unwrap(), epsilon = 1e-10);
        }
        assert_eq!(table.eval(-1.0), 0.0);
    }

    #[test]
    fn small_eps_statistics() {
        let w = std_w(1.0, 0.2);
        let flat = CurvedThreshold::new(1.0, 0.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(small_eps_mean(&w, &flat).unwrap(), 1.0);
        assert_relative_eq!(small_eps_var(&w, &flat).unwrap(), 0.2, max_relative = 1e-15);
        let fast = CurvedThreshold::new(1.0, 0.3, 1e6, 0.0).unwrap();
        assert_relative_eq!(small_eps_mean(&w, &fast).unwrap(), 1.0, max_relative = 1e-12);
        let th = CurvedThreshold::new(1.0, 0.05, 1.0, 0.0).unwrap();
        // term-by-term mpmath evaluation
        assert_relative_eq!(small_eps_mean(&w, &th).unwrap(), 1.020_004_219_420_515_9, max_relative = 1e-14);
        assert_relative_eq!(small_eps_var(&w, &th).unwrap(), 0.197_805_707_354_615_04, max_relative = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn pdf_is_nonnegative(
            s2 in 0.05_f64..2.0, a1 in 0.2_f64..8.0, b1 in -6.0_f64..1.0, b2 in -3.0_f64..1.5, t1 in 0.05_f64..4.0,
        ) {
            let w = std_w(1.0, s2);
            let thr = PiecewiseLinearThreshold::new(a1, b1, b2, t1, 0.0).unwrap();
            let law = FptLaw::new(w, thr).unwrap();
            for i in 1..400 {
                let v = law.pdf(i as f64 * 0.025);
                prop_assert!(v >= 0.0 && v.is_finite());
            }
        }

        #[test]
        fn equal_slopes_reduce_to_linear(
            s2 in 0.05_f64..2.0, a in 0.2_f64..8.0, b in -3.0_f64..0.9, t1 in 0.05_f64..4.0,
        ) {
            let w = std_w(1.0, s2);
            let thr = PiecewiseLinearThreshold::new(a, b, b, t1, 0.0).unwrap();
            let law = FptLaw::new(w, thr).unwrap();
            for i in 1..=2000 {
                let t = i as f64 * 0.005;
                let diff = (law.pdf(t) - linear_fpt_pdf(&w, a, b, t).unwrap()).abs();
                prop_assert!(diff < 1e-10, "t={} diff={}", t, diff);
            }
        }
    }
}
