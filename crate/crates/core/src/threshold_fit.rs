//! Two-piece linear approximations of the curved threshold on the fitting window.
//!
//! Four variants are produced: chords lying above the curve, tangents lying
//! below it, a line constrained between those two, and an unconstrained
//! least-squares line. Each minimizes a squared-distance area over `[τ0, τ*]`
//! with a simplex search; infeasible parameters score [`PENALTY`].

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate_with_breaks, NelderMead, Tolerance, PENALTY};
use crate::scalar::Real;
use crate::thresholds::{CurvedThreshold, FitWindow, PiecewiseLinearThreshold};

/// Points used to verify the ordering constraints between thresholds.
pub const CONSTRAINT_GRID: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitMethod {
    Above,
    Below,
    Between,
    Free,
}

impl FitMethod {
    pub const ALL: [FitMethod; 4] = [Self::Free, Self::Above, Self::Below, Self::Between];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Above => "above",
            Self::Below => "below",
            Self::Between => "between",
            Self::Free => "free",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "above" | "plus" => Ok(Self::Above),
            "below" | "minus" => Ok(Self::Below),
            "between" | "betw" => Ok(Self::Between),
            "free" => Ok(Self::Free),
            _ => Err(invalid("method", f64::NAN, "expected above, below, between or free")),
        }
    }
}

/// Method-specific free parameters of a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Knots<T> {
    /// Interior interpolation node of the chords.
    Above { t1: T },
    /// Tangency times of the two tangent lines.
    Below { tt1: T, tt2: T },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult<T> {
    pub threshold: PiecewiseLinearThreshold<T>,
    /// Achieved squared-distance area.
    pub objective: T,
    pub method: FitMethod,
    pub knots: Knots<T>,
}

/// All four fits for one curved threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedFamily<T> {
    pub above: FitResult<T>,
    pub below: FitResult<T>,
    pub between: FitResult<T>,
    pub free: FitResult<T>,
}

impl<T: Real> FittedFamily<T> {
    pub fn get(&self, method: FitMethod) -> &FitResult<T> {
        match method {
            FitMethod::Above => &self.above,
            FitMethod::Below => &self.below,
            FitMethod::Between => &self.between,
            FitMethod::Free => &self.free,
        }
    }
}

fn area_tolerance<T: Real>() -> Tolerance<T> {
    Tolerance::quadrature()
        .with_abs(T::tol_floor().max(T::lit(1e-15)))
        .with_rel(T::tol_floor().max(T::lit(1e-12)))
        .with_max_iter(4000)
}

/// `∫_{τ0}^{τ*} (f − g)² dt` with the given kinks as quadrature breakpoints.
pub fn squared_distance<T, F, G>(f: F, g: G, win: &FitWindow<T>, kinks: &[T]) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
    G: Fn(T) -> T,
{
    integrate_with_breaks(
        |t| {
            let d = f(t) - g(t);
            d * d
        },
        win.tau0(),
        win.tau_star(),
        kinks,
        &area_tolerance(),
    )
    .map(|q| q.value)
}

fn is_flat<T: Real>(th: &CurvedThreshold<T>) -> bool {
    th.eps() == T::zero() || th.lambda() == T::zero()
}

fn flat_result<T: Real>(th: &CurvedThreshold<T>, win: &FitWindow<T>, method: FitMethod) -> Result<FitResult<T>> {
    let mid = win.tau0() + win.width() / T::lit(2.0);
    let threshold = PiecewiseLinearThreshold::new(th.level(win.tau0()), T::zero(), T::zero(), mid, th.t0())?;
    let knots = match method {
        FitMethod::Above => Knots::Above { t1: mid },
        FitMethod::Below => Knots::Below {
            tt1: win.tau0() + win.width() / T::lit(4.0),
            tt2: win.tau0() + win.width() * T::lit(0.75),
        },
        _ => Knots::None,
    };
    Ok(FitResult {
        threshold,
        objective: T::zero(),
        method,
        knots,
    })
}

/// Knot where the tangents to `b` at `tt1 < tt2` meet.
///
/// Evaluated as `tt1 + (1 − d/(e^d − 1))/λ` with `d = λ(tt2 − tt1)`, an exact
/// rearrangement of the ratio of exponentials that stays accurate as `d → 0`.
pub fn tangent_intersection<T: Real>(th: &CurvedThreshold<T>, tt1: T, tt2: T) -> Result<T> {
    if !(tt1 < tt2) {
        return Err(Error::Degenerate("tangency times must satisfy tt1 < tt2"));
    }
    let d = th.lambda() * (tt2 - tt1);
    if !(d >= T::lit(1e-12)) {
        return Err(Error::Degenerate("tangency points too close for the intersection formula"));
    }
    let ratio = d / d.exp_m1();
    Ok(tt1 + (T::one() - ratio) / th.lambda())
}

/// Piecewise chord through `(τ0, b(τ0))`, `(t1, b(t1))` and `(τ*, b(τ*))`; the first
/// chord is extended back to `t0` to give `α1`.
pub fn build_above<T: Real>(
    th: &CurvedThreshold<T>,
    win: &FitWindow<T>,
    t1: T,
) -> Result<PiecewiseLinearThreshold<T>> {
    if !(t1 > win.tau0() && t1 < win.tau_star()) {
        return Err(Error::Ordering("chord knot must lie strictly inside the fit window"));
    }
    let (b_lo, b_mid, b_hi) = (th.level(win.tau0()), th.level(t1), th.level(win.tau_star()));
    let beta1 = (b_mid - b_lo) / (t1 - win.tau0());
    let beta2 = (b_hi - b_mid) / (win.tau_star() - t1);
    let alpha1 = b_lo + beta1 * (th.t0() - win.tau0());
    PiecewiseLinearThreshold::new(alpha1, beta1, beta2, t1, th.t0())
}

/// Tangent lines to `b` at `tt1` and `tt2` joined where they intersect.
pub fn build_below<T: Real>(th: &CurvedThreshold<T>, tt1: T, tt2: T) -> Result<PiecewiseLinearThreshold<T>> {
    if tt1 < th.t0() {
        return Err(Error::Domain {
            t: tt1.as_f64(),
            t0: th.t0().as_f64(),
        });
    }
    let knot = tangent_intersection(th, tt1, tt2)?;
    let beta1 = th.slope(tt1);
    let beta2 = th.slope(tt2);
    let alpha1 = th.level(tt1) + beta1 * (th.t0() - tt1);
    if knot > th.t0() {
        return PiecewiseLinearThreshold::new(alpha1, beta1, beta2, knot, th.t0());
    }
    Err(Error::Ordering("tangent intersection precedes the start time"))
}

fn window_point<T: Real>(win: &FitWindow<T>, u: T) -> T {
    win.tau0() + u * win.width()
}

fn window_coord<T: Real>(win: &FitWindow<T>, t: T) -> T {
    (t - win.tau0()) / win.width()
}

/// Jointly fits the chord threshold `b₊` and the tangent threshold `b₋` by
/// minimizing `∫|b₊ − b₋|²` over `(t1, t̃1, t̃2)`.
pub fn fit_above_below<T: Real>(
    th: &CurvedThreshold<T>,
    win: &FitWindow<T>,
) -> Result<(FitResult<T>, FitResult<T>)> {
    if is_flat(th) {
        return Ok((flat_result(th, win, FitMethod::Above)?, flat_result(th, win, FitMethod::Below)?));
    }
    // coordinates are fractions of the window so the search is translation invariant
    let objective = |u: &[T]| -> T {
        let (u1, v1, v2) = (u[0], u[1], u[2]);
        if !(u1 > T::zero() && u1 < T::one() && v1 >= T::zero() && v1 < v2 && v2 <= T::one()) {
            return T::lit(PENALTY);
        }
        let pair = build_above(th, win, window_point(win, u1)).and_then(|up| {
            build_below(th, window_point(win, v1), window_point(win, v2)).map(|down| (up, down))
        });
        match pair {
            Ok((up, down)) => squared_distance(|t| up.level(t), |t| down.level(t), win, &[up.t1(), down.t1()])
                .unwrap_or(T::lit(PENALTY)),
            Err(_) => T::lit(PENALTY),
        }
    };
    let start = [T::lit(0.5), T::lit(0.25), T::lit(0.75)];
    let found = NelderMead::default().run(objective, &start, &Tolerance::simplex())?;
    if !found.converged {
        return Err(Error::NoConvergence {
            routine: "fit_above_below",
            iterations: found.evaluations,
        });
    }
    let t1 = window_point(win, found.point[0]);
    let (tt1, tt2) = (window_point(win, found.point[1]), window_point(win, found.point[2]));
    let up = build_above(th, win, t1)?;
    let down = build_below(th, tt1, tt2)?;
    Ok((
        FitResult {
            threshold: up,
            objective: found.value,
            method: FitMethod::Above,
            knots: Knots::Above { t1 },
        },
        FitResult {
            threshold: down,
            objective: found.value,
            method: FitMethod::Below,
            knots: Knots::Below { tt1, tt2 },
        },
    ))
}

fn encode<T: Real>(thr: &PiecewiseLinearThreshold<T>, win: &FitWindow<T>) -> [T; 4] {
    [thr.alpha1(), thr.beta1(), thr.beta2(), window_coord(win, thr.t1())]
}

fn decode<T: Real>(p: &[T], win: &FitWindow<T>, t0: T) -> Result<PiecewiseLinearThreshold<T>> {
    PiecewiseLinearThreshold::new(p[0], p[1], p[2], window_point(win, p[3]), t0)
}

/// True when `lower ≤ mid ≤ upper` at every constraint-grid point of the window.
pub fn lies_between<T: Real>(
    lower: &PiecewiseLinearThreshold<T>,
    mid: &PiecewiseLinearThreshold<T>,
    upper: &PiecewiseLinearThreshold<T>,
    win: &FitWindow<T>,
) -> bool {
    let slack = T::lit(1e-12);
    win.grid(CONSTRAINT_GRID).all(|t| {
        let m = mid.level(t);
        lower.level(t) <= m + slack && m <= upper.level(t) + slack
    })
}

/// Line equidistant from `b₊` and `b₋`: minimizes `∫(|b₊ − c|² + |b₋ − c|²)`
/// subject to `b₋ ≤ c ≤ b₊` on the constraint grid.
pub fn fit_between<T: Real>(above: &FitResult<T>, below: &FitResult<T>, win: &FitWindow<T>) -> Result<FitResult<T>> {
    let (up, down) = (above.threshold, below.threshold);
    let t0 = up.t0();
    let cost = |c: &PiecewiseLinearThreshold<T>| -> Result<T> {
        let kinks = [up.t1(), down.t1(), c.t1()];
        let a = squared_distance(|t| up.level(t), |t| c.level(t), win, &kinks)?;
        let b = squared_distance(|t| down.level(t), |t| c.level(t), win, &kinks)?;
        Ok(a + b)
    };
    if up == down {
        return Ok(FitResult {
            threshold: up,
            objective: T::zero(),
            method: FitMethod::Between,
            knots: Knots::None,
        });
    }
    let objective = |p: &[T]| -> T {
        match decode(p, win, t0) {
            Ok(c) if lies_between(&down, &c, &up, win) => cost(&c).unwrap_or(T::lit(PENALTY)),
            _ => T::lit(PENALTY),
        }
    };

    // start from the cheapest feasible of the averaged parameters and the two bounds
    let (eu, ed) = (encode(&up, win), encode(&down, win));
    let avg: Vec<T> = eu.iter().zip(&ed).map(|(a, b)| (*a + *b) / T::lit(2.0)).collect();
    let start = [avg, eu.to_vec(), ed.to_vec()]
        .into_iter()
        .map(|p| {
            let v = objective(&p);
            (p, v)
        })
        .filter(|(_, v)| *v < T::lit(PENALTY))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite objective"))
        .map(|(p, _)| p)
        .ok_or(Error::Degenerate("no feasible starting point between the bounds"))?;

    let found = NelderMead::default().run(objective, &start, &Tolerance::simplex())?;
    if !found.converged {
        return Err(Error::NoConvergence {
            routine: "fit_between",
            iterations: found.evaluations,
        });
    }
    Ok(FitResult {
        threshold: decode(&found.point, win, t0)?,
        objective: found.value,
        method: FitMethod::Between,
        knots: Knots::None,
    })
}

/// Unconstrained least-squares two-piece line, seeded from `seed`.
pub fn fit_free_from<T: Real>(
    th: &CurvedThreshold<T>,
    win: &FitWindow<T>,
    seed: &PiecewiseLinearThreshold<T>,
) -> Result<FitResult<T>> {
    if is_flat(th) {
        return flat_result(th, win, FitMethod::Free);
    }
    let t0 = th.t0();
    let objective = |p: &[T]| -> T {
        match decode(p, win, t0) {
            Ok(c) => squared_distance(|t| c.level(t), |t| th.level(t), win, &[c.t1()]).unwrap_or(T::lit(PENALTY)),
            Err(_) => T::lit(PENALTY),
        }
    };
    let found = NelderMead::default().run(objective, &encode(seed, win), &Tolerance::simplex())?;
    if !found.converged {
        return Err(Error::NoConvergence {
            routine: "fit_free",
            iterations: found.evaluations,
        });
    }
    Ok(FitResult {
        threshold: decode(&found.point, win, t0)?,
        objective: found.value,
        method: FitMethod::Free,
        knots: Knots::None,
    })
}

/// Unconstrained least-squares fit, seeded from the between-threshold solution.
pub fn fit_free<T: Real>(th: &CurvedThreshold<T>, win: &FitWindow<T>) -> Result<FitResult<T>> {
    Ok(fit_family(th, win)?.free)
}

/// Runs the whole chain: above/below, then between, then free.
pub fn fit_family<T: Real>(th: &CurvedThreshold<T>, win: &FitWindow<T>) -> Result<FittedFamily<T>> {
    if is_flat(th) {
        return Ok(FittedFamily {
            above: flat_result(th, win, FitMethod::Above)?,
            below: flat_result(th, win, FitMethod::Below)?,
            between: flat_result(th, win, FitMethod::Between)?,
            free: flat_result(th, win, FitMethod::Free)?,
        });
    }
    let (above, below) = fit_above_below(th, win)?;
    let between = fit_between(&above, &below, win)?;
    let free = fit_free_from(th, win, &between.threshold)?;
    Ok(FittedFamily {
        above,
        below,
        between,
        free,
    })
}

/// Fits a single method (the free and between fits still run their prerequisites).
pub fn fit<T: Real>(th: &CurvedThreshold<T>, win: &FitWindow<T>, method: FitMethod) -> Result<FitResult<T>> {
    match method {
        FitMethod::Above => fit_above_below(th, win).map(|(a, _)| a),
        FitMethod::Below => fit_above_below(th, win).map(|(_, b)| b),
        FitMethod::Between => {
            let (a, b) = fit_above_below(th, win)?;
            fit_between(&a, &b, win)
        }
        FitMethod::Free => fit_free(th, win),
    }
}

/// `∫_{τ0}^{τ*} |c − b|²` for any two-piece line `c`.
pub fn distance_to_curve<T: Real>(
    c: &PiecewiseLinearThreshold<T>,
    th: &CurvedThreshold<T>,
    win: &FitWindow<T>,
) -> Result<T> {
    squared_distance(|t| c.level(t), |t| th.level(t), win, &[c.t1()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholds::{fit_window, WienerParams};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn setup(eps: f64, lambda: f64) -> (CurvedThreshold<f64>, FitWindow<f64>) {
        let w = WienerParams::standard(1.0, 0.2).unwrap();
        let th = CurvedThreshold::new(1.0, eps, lambda, 0.0).unwrap();
        let win = fit_window(&w, &th).unwrap();
        (th, win)
    }

    #[test]
    fn tangent_intersection_value() {
        let th = CurvedThreshold::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let t1 = tangent_intersection(&th, 0.0, 1.0).unwrap();
        // (1 − 2/e)/(1 − 1/e)
        assert_relative_eq!(t1, 0.418_023_293_130_673_6, max_relative = 1e-14);
        assert!(tangent_intersection(&th, 1.0, 1.0).is_err());
        assert!(tangent_intersection(&th, 1.0, 0.5).is_err());
    }

    #[test]
    fn tangent_intersection_matches_ratio_form() {
        let th = CurvedThreshold::new(1.0, 2.0, 0.7, 0.0).unwrap();
        for &(a, b) in &[(0.1, 0.2), (0.5, 3.0), (2.0, 9.0)] {
            let l: f64 = 0.7;
            let direct = ((-l * a).exp() * (1.0 + l * a) - (-l * b).exp() * (1.0 + l * b))
                / (l * ((-l * a).exp() - (-l * b).exp()));
            let t1 = tangent_intersection(&th, a, b).unwrap();
            assert_relative_eq!(t1, direct, max_relative = 1e-12);
            assert!(t1 > a && t1 < b);
        }
    }

    #[test]
    fn chords_interpolate() {
        let (th, win) = setup(5.0, 1.0);
        let t1 = 1.0;
        let up = build_above(&th, &win, t1).unwrap();
        for t in [win.tau0(), t1, win.tau_star()] {
            assert_relative_eq!(up.level(t), th.level(t), max_relative = 1e-13);
        }
        for t in win.grid(1001) {
            assert!(up.level(t) >= th.level(t) - 1e-12);
        }
        assert!(build_above(&th, &win, win.tau0()).is_err());
        assert!(build_above(&th, &win, win.tau_star() + 1.0).is_err());
    }

    #[test]
    fn tangents_touch_and_stay_below() {
        let th = CurvedThreshold::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let down = build_below(&th, 0.0, 1.0).unwrap();
        assert_relative_eq!(down.level(0.0), th.level(0.0), max_relative = 1e-15);
        assert_relative_eq!(down.level(1.0), th.level(1.0), max_relative = 1e-14);
        assert_relative_eq!(down.beta1(), -1.0);
        assert_relative_eq!(down.beta2(), -(-1.0_f64).exp(), max_relative = 1e-15);
        for i in 0..=1000 {
            let t = i as f64 * 0.01;
            assert!(down.level(t) <= th.level(t) + 1e-12);
        }
    }

    #[test]
    fn flat_curve_fits_exactly() {
        let (th, win) = setup(0.0, 1.0);
        let fam = fit_family(&th, &win).unwrap();
        for m in FitMethod::ALL {
            let r = fam.get(m);
            assert_eq!(r.objective, 0.0);
            assert_eq!(r.threshold.beta1(), 0.0);
            assert_eq!(r.threshold.beta2(), 0.0);
            assert_eq!(r.threshold.alpha1(), 1.0);
        }
    }

    #[test]
    fn family_respects_ordering() {
        let (th, win) = setup(1.0, 1.0);
        let fam = fit_family(&th, &win).unwrap();
        let (up, down, mid) = (fam.above.threshold, fam.below.threshold, fam.between.threshold);
        for t in win.grid(CONSTRAINT_GRID) {
            let b = th.level(t);
            assert!(down.level(t) <= b + 1e-12);
            assert!(up.level(t) >= b - 1e-12);
        }
        assert!(lies_between(&down, &mid, &up, &win));
        let free_vs_between = distance_to_curve(&mid, &th, &win).unwrap();
        assert!(fam.free.objective <= free_vs_between);
        assert!(fam.free.objective >= 0.0);
        assert_abs_diff_eq!(
            fam.free.objective,
            distance_to_curve(&fam.free.threshold, &th, &win).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn between_beats_averaged_parameters() {
        let (th, win) = setup(5.0, 1.0);
        let (a, b) = fit_above_below(&th, &win).unwrap();
        let mid = fit_between(&a, &b, &win).unwrap();
        let avg = PiecewiseLinearThreshold::new(
            (a.threshold.alpha1() + b.threshold.alpha1()) / 2.0,
            (a.threshold.beta1() + b.threshold.beta1()) / 2.0,
            (a.threshold.beta2() + b.threshold.beta2()) / 2.0,
            (a.threshold.t1() + b.threshold.t1()) / 2.0,
            0.0,
        )
        .unwrap();
        let kinks = [a.threshold.t1(), b.threshold.t1(), avg.t1()];
        let avg_cost = squared_distance(|t| a.threshold.level(t), |t| avg.level(t), &win, &kinks).unwrap()
            + squared_distance(|t| b.threshold.level(t), |t| avg.level(t), &win, &kinks).unwrap();
        let avg_cost = if lies_between(&b.threshold, &avg, &a.threshold, &win) {
            avg_cost
        } else {
            PENALTY
        };
        assert!(mid.objective <= avg_cost);
    }

    #[test]
    fn squared_distance_zero_iff_equal() {
        let (th, win) = setup(1.0, 1.0);
        let c = build_above(&th, &win, 1.0).unwrap();
        assert_eq!(squared_distance(|t| c.level(t), |t| c.level(t), &win, &[c.t1()]).unwrap(), 0.0);
        let shifted = PiecewiseLinearThreshold::new(c.alpha1() + 0.1, c.beta1(), c.beta2(), c.t1(), 0.0).unwrap();
        let d = squared_distance(|t| c.level(t), |t| shifted.level(t), &win, &[c.t1()]).unwrap();
        assert_relative_eq!(d, 0.01 * win.width(), max_relative = 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in FitMethod::ALL {
            assert_eq!(m.as_str().parse::<FitMethod>().unwrap(), m);
        }
        assert!("sideways".parse::<FitMethod>().is_err());
    }
}
