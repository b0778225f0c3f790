//! The two-piece passage-time law against independent constructions.

use fpt_core::fpt_law::{constrained_transition_density, linear_fpt_pdf, FptLaw};
use fpt_core::numerics::{integrate_with_breaks, Tolerance};
use fpt_core::threshold_fit::fit_family;
use fpt_core::thresholds::{fit_window, CurvedThreshold, PiecewiseLinearThreshold, WienerParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

/// Density after the knot as `∫ f_line2(t − t1 | x1) · p(x1, t1) dx1`, where `p` is
/// the killed transition density at the knot.
fn inner_integral(w: &WienerParams<f64>, thr: &PiecewiseLinearThreshold<f64>, t: f64) -> f64 {
    let a2 = thr.alpha2();
    let spread = (w.sigma2() * (thr.t1() - w.t0())).sqrt();
    let lo = (w.x0() + w.mu() * (thr.t1() - w.t0())).min(a2) - 12.0 * spread;
    let tol = Tolerance::quadrature().with_abs(1e-15).with_rel(1e-12);
    integrate_with_breaks(
        |x1| {
            if x1 >= a2 {
                return 0.0;
            }
            let p = constrained_transition_density(w, thr, &[(thr.t1(), x1)]).unwrap();
            let from_knot = WienerParams::new(w.mu(), w.sigma2(), x1, thr.t1()).unwrap();
            p * linear_fpt_pdf(&from_knot, a2, thr.beta2(), t).unwrap()
        },
        lo,
        a2,
        &[],
        &tol,
    )
    .unwrap()
    .value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn closed_form_matches_inner_integral(
        s2 in 0.1_f64..1.5, a1 in 0.8_f64..4.0, b1 in -3.0_f64..0.5, b2 in -1.5_f64..0.5,
        t1 in 0.3_f64..2.0, du in 0.05_f64..3.0,
    ) {
        let w = WienerParams::standard(1.0, s2).unwrap();
        let thr = PiecewiseLinearThreshold::new(a1, b1, b2, t1, 0.0).unwrap();
        prop_assume!(thr.alpha2() > 0.1);
        let law = FptLaw::new(w, thr).unwrap();
        let t = t1 + du;
        let closed = law.pdf(t);
        let oracle = inner_integral(&w, &thr, t);
        prop_assert!((closed - oracle).abs() <= 1e-9 + 1e-7 * oracle, "t={} closed={} oracle={}", t, closed, oracle);
    }
}

#[test]
fn constrained_density_matches_bridge_killed_monte_carlo() {
    // killing by the bridge probability at every step is exact for a constant level
    let (mu, s2, level, horizon, steps) = (0.5, 1.0, 1.0, 1.0, 10);
    let w = WienerParams::standard(mu, s2).unwrap();
    let thr = PiecewiseLinearThreshold::linear(level, 0.0, 0.0);
    let dt = horizon / steps as f64;
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (lo, hi, bins) = (-2.0, 1.0, 30);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    'path: for _ in 0..n {
        let mut x = 0.0;
        for _ in 0..steps {
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(Open01);
            let next = x + mu * dt + (s2 * dt).sqrt() * z;
            if next >= level || (-2.0 * (level - x) * (level - next) / (s2 * dt)).exp() > u {
                continue 'path;
            }
            x = next;
        }
        if x >= lo && x < hi {
            counts[((x - lo) / width) as usize] += 1;
        }
    }
    let tol = Tolerance::quadrature().with_abs(1e-13).with_rel(1e-11);
    for (k, &c) in counts.iter().enumerate() {
        let (a, b) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
        let p = integrate_with_breaks(
            |x| constrained_transition_density(&w, &thr, &[(horizon, x)]).unwrap(),
            a,
            b,
            &[],
            &tol,
        )
        .unwrap()
        .value;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let observed = c as f64 / n as f64;
        assert!((observed - p).abs() < 4.5 * se + 1e-6, "bin {k}: mc {observed} exact {p} se {se}");
    }
}

#[test]
fn fitted_free_laws_are_normalized() {
    for &(s2, eps, lambda) in &[(0.2_f64, 1.0_f64, 1.0_f64), (1.0, 5.0, 0.02), (0.4, 10.0, 10.0), (0.2, 0.05, 0.5)] {
        let w = WienerParams::standard(1.0, s2).unwrap();
        let th = CurvedThreshold::new(1.0, eps, lambda, 0.0).unwrap();
        let win = fit_window(&w, &th).unwrap();
        let fam = fit_family(&th, &win).unwrap();
        let m = FptLaw::new(w, fam.free.threshold).unwrap().moments().unwrap();
        assert!((m.total_mass - 1.0).abs() < 1e-6, "eps={eps} lambda={lambda} mass {}", m.total_mass);
    }
}
