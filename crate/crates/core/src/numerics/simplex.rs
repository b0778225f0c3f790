use super::Tolerance;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Value returned by penalized objectives outside their feasible region.
pub const PENALTY: f64 = 1e10;

/// Best point found by a simplex search.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub point: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub converged: bool,
}

/// Derivative-free Nelder–Mead simplex search with restarts.
#[derive(Debug, Clone)]
pub struct NelderMead<T> {
    pub reflection: T,
    pub expansion: T,
    pub contraction: T,
    pub shrink: T,
    /// Number of fresh simplices built around the incumbent after the first run.
    pub restarts: usize,
    /// Initial edge length relative to each coordinate's magnitude.
    pub relative_step: T,
    /// Edge length used for coordinates that are exactly zero.
    pub zero_step: T,
}

impl<T: Real> Default for NelderMead<T> {
    fn default() -> Self {
        Self {
            reflection: T::one(),
            expansion: T::lit(2.0),
            contraction: T::lit(0.5),
            shrink: T::lit(0.5),
            restarts: 2,
            relative_step: T::lit(0.05),
            zero_step: T::lit(0.00025),
        }
    }
}

impl<T: Real> NelderMead<T> {
    pub fn with_steps(mut self, relative: T, zero: T) -> Self {
        self.relative_step = relative;
        self.zero_step = zero;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    /// Runs the search. Only an unusable starting point is an error; running out
    /// of iterations is reported through [`Minimum::converged`].
    pub fn run<F>(&self, objective: F, initial: &[T], tol: &Tolerance<T>) -> Result<Minimum<T>>
    where
        F: Fn(&[T]) -> T,
    {
        if initial.is_empty() {
            return Err(Error::Degenerate("simplex search needs at least one coordinate"));
        }
        let f = |x: &[T]| {
            let v = objective(x);
            if v.is_nan() {
                T::infinity()
            } else {
                v
            }
        };
        let f0 = f(initial);
        if !f0.is_finite() {
            return Err(invalid("initial", f0.as_f64(), "objective must be finite at the start"));
        }
        let mut best = Minimum {
            point: initial.to_vec(),
            value: f0,
            evaluations: 1,
            converged: false,
        };
        for _ in 0..=self.restarts {
            let run = self.single_run(&f, &best.point, best.value, tol);
            let evaluations = best.evaluations + run.evaluations;
            if run.value <= best.value {
                best = run;
            } else {
                best.converged = run.converged;
            }
            best.evaluations = evaluations;
        }
        Ok(best)
    }

    fn single_run<F>(&self, f: &F, start: &[T], f_start: T, tol: &Tolerance<T>) -> Minimum<T>
    where
        F: Fn(&[T]) -> T,
    {
        let n = start.len();
        let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
        simplex.push((start.to_vec(), f_start));
        let mut evaluations = 0;
        for i in 0..n {
            let mut x = start.to_vec();
            x[i] = if x[i] != T::zero() {
                x[i] + self.relative_step * x[i]
            } else {
                self.zero_step
            };
            let fx = f(&x);
            evaluations += 1;
            simplex.push((x, fx));
        }

        let nf = T::lit(n as f64);
        let mut converged = false;
        for _ in 0..tol.max_iter {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN mapped to +inf"));
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (*a - *b).abs()))
                .fold(T::zero(), T::max);
            if diameter < tol.abs_tol {
                converged = true;
                break;
            }

            let mut centroid = vec![T::zero(); n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c = *c + *xi;
                }
            }
            centroid.iter_mut().for_each(|c| *c = *c / nf);

            let toward = |coef: T, from: &[T]| -> Vec<T> {
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, w)| *c + coef * (*c - *w))
                    .collect()
            };
            let (worst, f_worst) = simplex[n].clone();
            let f_best = simplex[0].1;
            let f_second = simplex[n - 1].1;

            let xr = toward(self.reflection, &worst);
            let fr = f(&xr);
            evaluations += 1;

            if fr < f_best {
                let xe = toward(self.reflection * self.expansion, &worst);
                let fe = f(&xe);
                evaluations += 1;
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < f_second || (n == 1 && fr < f_worst) {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc, accept) = if fr < f_worst {
                let xc = toward(self.reflection * self.contraction, &worst);
                let fc = f(&xc);
                (xc, fc, fc <= fr)
            } else {
                let xc = toward(-self.contraction, &worst);
                let fc = f(&xc);
                (xc, fc, fc < f_worst)
            };
            evaluations += 1;
            if accept {
                simplex[n] = (xc, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, ai) in x.iter_mut().zip(&anchor) {
                    *xi = *ai + self.shrink * (*xi - *ai);
                }
                *fx = f(x);
                evaluations += 1;
            }
        }
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("NaN mapped to +inf"));
        let (point, value) = simplex.swap_remove(0);
        Minimum {
            point,
            value,
            evaluations,
            converged,
        }
    }
}

/// Minimizes `objective` from `initial` with the default simplex settings.
///
/// Unlike [`NelderMead::run`], failing to converge within `tol.max_iter`
/// iterations is an error here.
pub fn minimize<T, F>(objective: F, initial: &[T], tol: &Tolerance<T>) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    let m = NelderMead::default().run(objective, initial, tol)?;
    if !m.converged {
        return Err(Error::NoConvergence {
            routine: "minimize",
            iterations: tol.max_iter,
        });
    }
    Ok(m.point)
}
