//! Scalar and small-system complex root finders shared by the transform
//! inversions and the saddle-point solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, RieError};
use crate::C64;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub z: C64,
    pub residual: f64,
    pub iterations: usize,
}

fn derivative<F: Fn(C64) -> Result<C64>>(f: &F, z: C64) -> Result<C64> {
    let h = 1e-6 * (1.0 + z.norm());
    let fp = f(z + h)?;
    let fm = f(z - h)?;
    Ok((fp - fm) / (2.0 * h))
}

/// Complex Newton iteration on an analytic `f`, halving the step whenever
/// it fails to reduce |f| or leaves the domain of `f`.
pub fn newton<F>(what: &'static str, f: F, z0: C64, opts: NewtonOptions) -> Result<Root>
where
    F: Fn(C64) -> Result<C64>,
{
    let mut z = z0;
    let mut fz = f(z)?;
    let mut res = fz.norm();
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(Root {
                z,
                residual: res,
                iterations: it,
            });
        }
        let d = match derivative(&f, z) {
            Ok(d) if d.is_finite() && d.norm() > 0.0 => d,
            _ => break,
        };
        let step = -fz / d;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = z + step * lambda;
            if let Ok(fc) = f(cand) {
                if fc.is_finite() && fc.norm() < res {
                    z = cand;
                    fz = fc;
                    res = fc.norm();
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        return Ok(Root {
            z,
            residual: res,
            iterations: opts.max_iter,
        });
    }
    Err(RieError::Solver {
        what,
        iterations: opts.max_iter,
        residual: res,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

/// Controls for the per-mode saddle-point solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Use the Gaussian closed forms when the priors allow it.
    pub closed_forms: bool,
    pub fixed_point: FixedPointOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            closed_forms: true,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

fn max_rel_gap(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm() / (1.0 + y.norm()))
        .fold(0.0, f64::max)
}

/// Damped iteration x <- (1-d) x + d g(x). Returns the iterate together with
/// the final fixed-point gap max |g(x) - x| / (1 + |x|).
pub fn fixed_point<G>(
    what: &'static str,
    g: G,
    x0: Vec<C64>,
    opts: FixedPointOptions,
) -> Result<(Vec<C64>, f64)>
where
    G: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let mut x = x0;
    let mut gap = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let gx = g(&x)?;
        gap = max_rel_gap(&gx, &x);
        if !gap.is_finite() {
            break;
        }
        if gap <= opts.tol {
            return Ok((gx, gap));
        }
        for (xi, gi) in x.iter_mut().zip(&gx) {
            *xi += (gi - *xi) * opts.damping;
        }
    }
    Err(RieError::Solver {
        what,
        iterations: opts.max_iter,
        residual: gap,
    })
}

/// Newton iteration for a small analytic system F(x) = 0 using a
/// finite-difference Jacobian and step halving.
pub fn newton_system<F>(
    what: &'static str,
    f: F,
    x0: Vec<C64>,
    opts: NewtonOptions,
) -> Result<(Vec<C64>, f64)>
where
    F: Fn(&[C64]) -> Result<Vec<C64>>,
{
    let n = x0.len();
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut res = norm(&fx);
    for _ in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok((x, res));
        }
        let mut jac = DMatrix::<C64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + x[j].norm());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = match (f(&xp), f(&xm)) {
                (Ok(fp), Ok(fm)) => (fp, fm),
                _ => {
                    return Err(RieError::Solver {
                        what,
                        iterations: 0,
                        residual: res,
                    })
                }
            };
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(n, fx.iter().map(|v| -v));
        let step = match jac.lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => break,
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<C64> = x.iter().zip(step.iter()).map(|(a, s)| a + s * lambda).collect();
            if let Ok(fc) = f(&cand) {
                let rc = norm(&fc);
                if rc.is_finite() && rc < res {
                    x = cand;
                    fx = fc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        return Ok((x, res));
    }
    Err(RieError::Solver {
        what,
        iterations: opts.max_iter,
        residual: res,
    })
}
