use super::Tolerance;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

// 15-point Kronrod extension of the 7-point Gauss rule, abscissae in decreasing order.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub value: T,
    pub abs_error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    exhausted: bool,
}

fn kronrod15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Panel<T> {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut gauss = fc * T::lit(WG[3]);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut res_abs = kronrod.abs();
    let mut fv1 = [T::zero(); 7];
    let mut fv2 = [T::zero(); 7];
    for j in 0..7 {
        let x = half_len * T::lit(XGK[j]);
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        let w = T::lit(WGK[j]);
        kronrod = kronrod + w * (f1 + f2);
        res_abs = res_abs + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = kronrod * half;
    let mut res_asc = T::lit(WGK[7]) * (fc - mean).abs();
    for j in 0..7 {
        res_asc = res_asc + T::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let width = half_len.abs();
    let value = kronrod * half_len;
    res_abs = res_abs * width;
    res_asc = res_asc * width;

    // QUADPACK error scaling
    let mut error = ((kronrod - gauss) * half_len).abs();
    if res_asc != T::zero() && error != T::zero() {
        let scale = (T::lit(200.0) * error / res_asc).powf(T::lit(1.5));
        error = res_asc * scale.min(T::one());
    }
    let floor = T::lit(50.0) * T::epsilon() * res_abs;
    let exhausted = error <= floor;
    if error < floor {
        error = floor;
    }
    Panel {
        a,
        b,
        value,
        error,
        exhausted,
    }
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`.
///
/// Succeeds once the summed error estimate is at most
/// `max(abs_tol, rel_tol·|result|)`; `tol.max_iter` caps the number of panels.
pub fn integrate<T, F>(f: F, a: T, b: T, tol: &Tolerance<T>) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
{
    integrate_with_breaks(f, a, b, &[], tol).map(|q| q.value)
}

/// [`integrate`] with mandatory breakpoints where the integrand may kink or jump.
///
/// Breakpoints outside `(a, b)` are ignored. `a == b` integrates to zero.
pub fn integrate_with_breaks<T, F>(
    f: F,
    a: T,
    b: T,
    breaks: &[T],
    tol: &Tolerance<T>,
) -> Result<Quadrature<T>>
where
    T: Real,
    F: Fn(T) -> T,
{
    if !a.is_finite() {
        return Err(invalid("a", a.as_f64(), "integration limit must be finite"));
    }
    if !b.is_finite() {
        return Err(invalid("b", b.as_f64(), "integration limit must be finite"));
    }
    if b < a {
        return Err(Error::Ordering("integration requires a <= b"));
    }
    if a == b {
        return Ok(Quadrature {
            value: T::zero(),
            abs_error: T::zero(),
            intervals: 0,
        });
    }

    let mut knots: Vec<T> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    knots.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    knots.dedup();

    let mut panels = Vec::with_capacity(knots.len() + 16);
    let mut left = a;
    for &k in knots.iter().chain(std::iter::once(&b)) {
        panels.push(kronrod15(&f, left, k));
        left = k;
    }

    loop {
        let (value, error) = panels
            .iter()
            .fold((T::zero(), T::zero()), |(v, e), p| (v + p.value, e + p.error));
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Degenerate("integrand is not finite on the interval"));
        }
        let target = tol.abs_tol.max(tol.rel_tol * value.abs());
        if error <= target {
            return Ok(Quadrature {
                value,
                abs_error: error,
                intervals: panels.len(),
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.exhausted)
            .max_by(|(_, p), (_, q)| p.error.partial_cmp(&q.error).expect("finite errors"))
            .map(|(i, _)| i);
        let Some(i) = worst else {
            // every panel is at the round-off floor; nothing left to refine
            return Ok(Quadrature {
                value,
                abs_error: error,
                intervals: panels.len(),
            });
        };
        if panels.len() >= tol.max_iter {
            return Err(Error::NoConvergence {
                routine: "integrate",
                iterations: panels.len(),
            });
        }
        let p = panels[i];
        let mid = p.a + (p.b - p.a) / T::lit(2.0);
        if !(mid > p.a && mid < p.b) {
            panels[i].exhausted = true;
            continue;
        }
        let left = kronrod15(&f, p.a, mid);
        let right = kronrod15(&f, mid, p.b);
        panels[i] = left;
        panels.push(right);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ig_cdf, ig_pdf};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn weights_are_normalized() {
        let k: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        let g: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert_relative_eq!(k, 2.0, max_relative = 1e-15);
        assert_relative_eq!(g, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn polynomials() {
        let tol = Tolerance::quadrature();
        assert_relative_eq!(integrate(|_| 1.0_f64, 0.0, 1.0, &tol).unwrap(), 1.0);
        assert_relative_eq!(integrate(|t| t, 0.0_f64, 1.0, &tol).unwrap(), 0.5, max_relative = 1e-15);
        assert_eq!(integrate(|t| t, 2.0_f64, 2.0, &tol).unwrap(), 0.0);
        assert!(integrate(|t| t, 2.0_f64, 1.0, &tol).is_err());
    }

    #[test]
    fn ig_density_is_normalized() {
        let tol = Tolerance::quadrature();
        let total = integrate(|t| ig_pdf(t, 1.0_f64, 5.0).unwrap(), 0.0, 60.0, &tol).unwrap();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn breakpoints_handle_kinks_and_jumps() {
        let tol = Tolerance::quadrature();
        let q = integrate_with_breaks(|t: f64| if t < 0.3 { 0.0 } else { 1.0 }, 0.0, 1.0, &[0.3], &tol)
            .unwrap();
        assert_relative_eq!(q.value, 0.7, max_relative = 1e-14);
        assert_eq!(q.intervals, 2);
        let v = integrate_with_breaks(|t: f64| (t - 0.4).abs(), 0.0, 1.0, &[0.4, 7.0], &tol).unwrap();
        assert_relative_eq!(v.value, 0.08 + 0.18, max_relative = 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance::quadrature().with_abs(1e-14).with_rel(1e-14).with_max_iter(3);
        let r = integrate(|t: f64| (1.0 / (t + 1e-6)).sin(), 0.0, 1.0, &tol);
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let tol = Tolerance::quadrature();
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, &tol).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let tol = Tolerance::<f32>::quadrature();
        let v = integrate(|t: f32| t * t, 0.0, 3.0, &tol).unwrap();
        assert!((v - 9.0).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ig_cdf_matches_integrated_density(m in 0.1_f64..10.0, l in 0.1_f64..10.0, frac in 0.05_f64..3.0) {
            let t = frac * m;
            let tol = Tolerance::quadrature().with_abs(1e-11).with_rel(1e-11).with_max_iter(5000);
            let area = integrate(|s| ig_pdf(s, m, l).unwrap(), 0.0, t, &tol).unwrap();
            let closed = ig_cdf(t, m, l).unwrap();
            prop_assert!((area - closed).abs() < 1e-6, "area={} closed={}", area, closed);
        }
    }
}
