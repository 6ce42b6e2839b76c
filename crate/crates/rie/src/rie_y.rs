//! Rotation-invariant estimators for the rectangular factor Y, the
//! product-denoising estimator for X·Y, and sparse post-processing.
//!
//! Per singular value γ of S the unknowns (q₃, q₄) solve a fixed-point system
//! whose coefficients β₁..β₄ involve the R-transform of ρ_X and the
//! rectangular R-transform of μ_W. Shifted-Wigner X with Gaussian W reduces
//! it to a cubic in q₄.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{arg, Result, RieError};
use crate::roots::{fixed_point, newton_system, NewtonOptions, SolveOptions};
use crate::spectrum::{fill_from_nearest, Regime, SpectralEvaluator, DENSITY_FLOOR};
use crate::transforms::MeasureModel;
use crate::{map_indices, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YParams {
    pub z: C64,
    pub beta1: C64,
    pub beta2: C64,
    pub beta3: C64,
    pub beta4: C64,
    pub q1: C64,
    pub q2: C64,
    pub q3: C64,
    pub q4: C64,
    /// (z - β₁)(z - β₂)
    pub z1: C64,
    /// β₄² + β₃(z - β₁)
    pub z2: C64,
    pub g: C64,
    pub alpha: f64,
    /// Fixed-point gap of (q₃, q₄) under the system map.
    pub residual: f64,
}

impl YParams {
    /// Parameters at -z̄ from those at z: the system has real coefficients
    /// and g(-z̄) = -conj g(z), so the continued solution is conjugated with
    /// the odd quantities also negated.
    fn mirrored(&self) -> Self {
        let odd = |x: C64| -x.conj();
        Self {
            z: odd(self.z),
            beta1: odd(self.beta1),
            beta2: odd(self.beta2),
            beta3: odd(self.beta3),
            beta4: self.beta4.conj(),
            q1: odd(self.q1),
            q2: odd(self.q2),
            q3: odd(self.q3),
            q4: self.q4.conj(),
            z1: self.z1.conj(),
            z2: self.z2.conj(),
            g: odd(self.g),
            ..*self
        }
    }

    fn pref(&self) -> f64 {
        if self.alpha > 1.0 {
            self.alpha
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YEstimate {
    /// One value per non-trivial singular pair of S (min(N, M) values).
    pub xi: Vec<f64>,
    pub edge_flags: Vec<bool>,
    pub params_per_mode: Vec<Option<YParams>>,
    pub solver_failures: usize,
    pub max_residual: f64,
}

impl YEstimate {
    pub fn edge_count(&self) -> usize {
        self.edge_flags.iter().filter(|f| **f).count()
    }
}

fn is_gaussian(law: &MeasureModel, alpha: f64) -> bool {
    matches!(law, MeasureModel::GaussianIidSingular { aspect } if (aspect - alpha).abs() < 1e-12)
}

/// Everything in the system that depends only on the data and μ_W.
#[derive(Clone, Copy)]
struct Fixed {
    z: C64,
    g: C64,
    q1: C64,
    q2: C64,
    /// scale·𝒞_W(q₁q₂)
    cw: C64,
    alpha: f64,
}

impl Fixed {
    fn new(g: C64, z: C64, mu_w: &MeasureModel, alpha: f64) -> Result<Self> {
        if !(z.im < 0.0) || !z.is_finite() {
            return arg(format!("evaluation point must lie below the real axis, got {z}"));
        }
        let reg = Regime::new(alpha)?;
        let (q1, q2) = reg.traces(g, z);
        let cw = mu_w.rect_c_transform(reg.aspect, q1 * q2)? * reg.scale;
        Ok(Self {
            z,
            g,
            q1,
            q2,
            cw,
            alpha,
        })
    }

    fn beta2(&self) -> C64 {
        let a = if self.alpha <= 1.0 { self.alpha } else { 1.0 };
        self.cw * a / self.q2
    }

    /// β₁, β₃, β₄ from (q₃, q₄).
    fn betas(&self, rho_x: &MeasureModel, q3: C64, q4: C64) -> Result<(C64, C64, C64)> {
        let s = (self.q1 * q3).sqrt();
        if s.norm() < 1e-7 * (1.0 + q4.norm()) {
            // (ℛ(q₄+s) - ℛ(q₄-s))/(2s) -> ℛ'(q₄)
            let h = 1e-5 * (1.0 + q4.norm());
            let d = (rho_x.r_transform(q4 + h)? - rho_x.r_transform(q4 - h)?) / (2.0 * h);
            return Ok((self.cw / self.q1 + q3 * d, self.q1 * d, rho_x.r_transform(q4)?));
        }
        let rp = rho_x.r_transform(q4 + s)?;
        let rm = rho_x.r_transform(q4 - s)?;
        let half_d = (rp - rm) * 0.5;
        Ok((
            self.cw / self.q1 + s * half_d / self.q1,
            self.q1 * half_d / s,
            (rp + rm) * 0.5,
        ))
    }

    fn q_from_betas(&self, beta1: C64, beta4: C64) -> (C64, C64) {
        let d = self.z - beta1;
        let q3 = (d * d * self.q1 - d) / (beta4 * beta4);
        let q4 = (d * self.q1 - 1.0) / beta4;
        (q3, q4)
    }

    fn map(&self, rho_x: &MeasureModel, q3: C64, q4: C64) -> Result<[C64; 2]> {
        let (b1, _, b4) = self.betas(rho_x, q3, q4)?;
        let (n3, n4) = self.q_from_betas(b1, b4);
        Ok([n3, n4])
    }

    fn params(&self, rho_x: &MeasureModel, q3: C64, q4: C64, residual: f64) -> Result<YParams> {
        let (beta1, beta3, beta4) = self.betas(rho_x, q3, q4)?;
        Ok(self.assemble(beta1, self.beta2(), beta3, beta4, q3, q4, residual))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(&self, beta1: C64, beta2: C64, beta3: C64, beta4: C64, q3: C64, q4: C64, residual: f64) -> YParams {
        YParams {
            z: self.z,
            beta1,
            beta2,
            beta3,
            beta4,
            q1: self.q1,
            q2: self.q2,
            q3,
            q4,
            z1: (self.z - beta1) * (self.z - beta2),
            z2: beta4 * beta4 + beta3 * (self.z - beta1),
            g: self.g,
            alpha: self.alpha,
            residual,
        }
    }
}

fn cubic(x: C64, c: f64, a: C64) -> C64 {
    ((x * 2.0 + 3.0 * c) * x + (c * c + 2.0 + a)) * x + c * (a + 1.0)
}

/// The coefficient A of the q₄ cubic 2x³ + 3cx² + (c² + 2 + A)x + c(A + 1).
fn cubic_a(g: C64, z: C64, alpha: f64) -> Result<C64> {
    let (q1, q2) = Regime::new(alpha)?.traces(g, z);
    Ok(-(z - q2 / alpha) * q1)
}

/// Root q₄ of the cubic for shifted-Wigner X (shift c) and Gaussian W,
/// from the closed-form expression with the principal cube root. When that
/// branch is not an accurate root with Im q₄ ≥ 0, the other two cube-root
/// branches are tried and the admissible one with the smallest residual
/// is kept.
pub fn q4_cubic(gs: C64, z: C64, c: f64, alpha: f64) -> Result<C64> {
    if c == 0.0 {
        return arg("the cubic needs a nonzero shift");
    }
    let a = cubic_a(gs, z, alpha)?;
    let p = 12.0 - 3.0 * c * c + a * 6.0;
    let b = -216.0 * c * a + 4.0 * (4.0 * p * p * p + (54.0 * c) * (54.0 * c) * a * a).sqrt();
    let cbrt = b.powf(1.0 / 3.0);
    let candidate = |k: u32| {
        let w = cbrt * C64::from_polar(1.0, 2.0 * PI * k as f64 / 3.0);
        let x = -c / 2.0 - p / (3.0 * w) + w / 12.0;
        polish(x, c, a)
    };
    let scale = 1.0 + c.abs().powi(3) + a.norm();
    let ok = |x: C64| cubic(x, c, a).norm() < 1e-10 * scale && x.im >= -1e-12;
    let first = candidate(0);
    if ok(first) {
        return Ok(first);
    }
    let best = [candidate(1), candidate(2)]
        .into_iter()
        .filter(|x| x.im >= -1e-12 && x.is_finite())
        .min_by(|x, y| cubic(*x, c, a).norm().total_cmp(&cubic(*y, c, a).norm()));
    match best {
        Some(x) if cubic(x, c, a).norm() < 1e-8 * scale => Ok(x),
        _ => Err(RieError::Solver {
            what: "q4 cubic",
            iterations: 3,
            residual: cubic(first, c, a).norm(),
        }),
    }
}

fn polish(mut x: C64, c: f64, a: C64) -> C64 {
    for _ in 0..3 {
        let f = cubic(x, c, a);
        let df = (x * 6.0 + 6.0 * c) * x + (c * c + 2.0 + a);
        if df.norm() == 0.0 || !f.is_finite() {
            break;
        }
        let step = f / df;
        x -= step;
        if step.norm() < 1e-16 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}

/// Residual of the cubic at x, for diagnostics.
pub fn q4_cubic_residual(gs: C64, z: C64, c: f64, alpha: f64, x: C64) -> Result<f64> {
    Ok(cubic(x, c, cubic_a(gs, z, alpha)?).norm())
}

fn solve_general(fx: &Fixed, rho_x: &MeasureModel, opts: &SolveOptions) -> Result<YParams> {
    // start from X = m I, whose R-transform is the constant m
    let m = match rho_x.mean() {
        v if v.abs() > 1e-8 && v.is_finite() => v,
        _ => 1.0,
    };
    let (q3_0, q4_0) = fx.q_from_betas(fx.cw / fx.q1, C64::new(m, 0.0));
    let fp = fixed_point(
        "Y fixed point",
        |x: &[C64]| Ok(fx.map(rho_x, x[0], x[1])?.to_vec()),
        vec![q3_0, q4_0],
        opts.fixed_point,
    );
    let x = match fp {
        Ok((x, _)) => x,
        Err(_) => {
            let (x, _) = newton_system(
                "Y system Newton",
                |x: &[C64]| {
                    let g = fx.map(rho_x, x[0], x[1])?;
                    Ok(vec![g[0] - x[0], g[1] - x[1]])
                },
                vec![q3_0, q4_0],
                NewtonOptions {
                    tol: 1e-12,
                    max_iter: 100,
                },
            )?;
            x
        }
    };
    let g = fx.map(rho_x, x[0], x[1])?;
    let residual = (g[0] - x[0]).norm().max((g[1] - x[1]).norm());
    fx.params(rho_x, x[0], x[1], residual)
}

fn solve_cubic(fx: &Fixed, c: f64) -> Result<YParams> {
    let q4 = q4_cubic(fx.g, fx.z, c, fx.alpha)?;
    let q3 = (fx.z - fx.q2 / fx.alpha) * q4 / (q4 * 2.0 + c);
    let a = cubic_a(fx.g, fx.z, fx.alpha)?;
    Ok(fx.assemble(fx.q2 / fx.alpha + q3, fx.q1, fx.q1, q4 + c, q3, q4, cubic(q4, c, a).norm()))
}

/// Solves the Y system at `z` given g = 𝒢_{μ̄_S}(z). Points left of the
/// imaginary axis are reflected from -z̄, which makes the overlap odd in γ.
pub fn solve_y_params_at(
    g: C64,
    z: C64,
    rho_x: &MeasureModel,
    mu_w: &MeasureModel,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<YParams> {
    if z.re < 0.0 {
        return Ok(solve_y_params_at(-g.conj(), -z.conj(), rho_x, mu_w, alpha, opts)?.mirrored());
    }
    let fx = Fixed::new(g, z, mu_w, alpha)?;
    if rho_x.is_symmetric() {
        let zero = C64::new(0.0, 0.0);
        return Ok(fx.assemble(fx.cw / fx.q1, fx.beta2(), zero, zero, zero, zero, 0.0));
    }
    match rho_x {
        MeasureModel::ShiftedWignerEig { c } if opts.closed_forms && is_gaussian(mu_w, alpha) => solve_cubic(&fx, *c),
        _ => solve_general(&fx, rho_x, opts),
    }
}

pub fn solve_y_params(
    ev: &SpectralEvaluator,
    rho_x: &MeasureModel,
    mu_w: &MeasureModel,
    z: C64,
    alpha: f64,
) -> Result<YParams> {
    let g = ev.symmetrized_stieltjes(z)?;
    solve_y_params_at(g, z, rho_x, mu_w, alpha, &SolveOptions::default())
}

fn run_modes<F>(ev: &SpectralEvaluator, kappa: f64, solve: F) -> Result<YEstimate>
where
    F: Fn(C64, C64) -> Result<(Option<YParams>, C64)> + Sync + Send,
{
    if !(kappa > 0.0 && kappa.is_finite()) {
        return arg(format!("kappa must be positive, got {kappa}"));
    }
    let sp = ev.spectrum();
    let k = sp.k();
    let pref = if sp.alpha() > 1.0 { sp.alpha() } else { 1.0 };
    let gammas = sp.gammas();
    let rows = map_indices(k, |i| {
        let z = ev.point(gammas[i]);
        let g = match ev.symmetrized_stieltjes(z) {
            Ok(g) => g,
            Err(_) => return (None, 0.0, true, true),
        };
        let edge = g.im / PI < DENSITY_FLOOR;
        match solve(g, z) {
            Ok((p, q4)) => {
                let v = pref * q4.im / (kappa.sqrt() * g.im);
                if v.is_finite() {
                    (p, v, edge, false)
                } else {
                    (p, 0.0, true, true)
                }
            }
            Err(_) => (None, 0.0, true, true),
        }
    });
    let mut xi = Vec::with_capacity(k);
    let mut params = Vec::with_capacity(k);
    let mut bad = Vec::with_capacity(k);
    let mut failures = 0;
    for (p, v, b, f) in rows {
        params.push(p);
        xi.push(v);
        bad.push(b);
        failures += f as usize;
    }
    fill_from_nearest(&mut xi, &bad)?;
    let max_residual = params.iter().flatten().map(|p: &YParams| p.residual).fold(0.0, f64::max);
    Ok(YEstimate {
        xi,
        edge_flags: bad,
        params_per_mode: params,
        solver_failures: failures,
        max_residual,
    })
}

/// Singular values of the RIE for Y, paired with the singular vectors of S.
pub fn estimate_y_with(
    ev: &SpectralEvaluator,
    rho_x: &MeasureModel,
    mu_w: &MeasureModel,
    kappa: f64,
    opts: &SolveOptions,
) -> Result<YEstimate> {
    rho_x.validate()?;
    let alpha = ev.alpha();
    if rho_x.is_symmetric() {
        let k = ev.spectrum().k();
        return Ok(YEstimate {
            xi: vec![0.0; k],
            edge_flags: vec![false; k],
            params_per_mode: vec![None; k],
            solver_failures: 0,
            max_residual: 0.0,
        });
    }
    run_modes(ev, kappa, |g, z| {
        let p = solve_y_params_at(g, z, rho_x, mu_w, alpha, opts)?;
        Ok((Some(p), p.q4))
    })
}

pub fn estimate_y(ev: &SpectralEvaluator, rho_x: &MeasureModel, mu_w: &MeasureModel, kappa: f64) -> Result<YEstimate> {
    estimate_y_with(ev, rho_x, mu_w, kappa, &SolveOptions::default())
}

/// Singular values of the RIE for the product X·Y treated as one signal:
/// Im[z q₁ - scale·𝒞_W(q₁q₂) - 1] / (√κ Im 𝒢) (times α when α > 1).
pub fn denoise_xy(ev: &SpectralEvaluator, mu_w: &MeasureModel, kappa: f64) -> Result<YEstimate> {
    let alpha = ev.alpha();
    run_modes(ev, kappa, |g, z| {
        let fx = Fixed::new(g, z, mu_w, alpha)?;
        let q4 = z * fx.q1 - fx.cw - 1.0;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let d = z - fx.cw / fx.q1;
        let p = fx.assemble(fx.cw / fx.q1, fx.beta2(), zero, one, d * d * fx.q1 - d, q4, 0.0);
        Ok((Some(p), q4))
    })
}

/// Rescaled overlap N·E[(uᵀy⁽ˡ⁾)(vᵀy⁽ʳ⁾)] between the singular pair of S at
/// the point of `params` and a singular pair of Y with singular value σ.
pub fn overlap_y_theory(params: &YParams, sigma: f64, kappa: f64) -> f64 {
    let s = kappa.sqrt() * sigma;
    let v = params.beta4 * s / (params.z1 - params.z2 * s * s);
    params.pref() * v.im / params.g.im
}

/// Entrywise map to {±1/√n, 0}: entries with |x| > h/√n keep their sign.
pub fn threshold_sparse(est: &DMatrix<f64>, h: f64, n: usize) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&h) || n == 0 {
        return arg(format!("threshold needs h in [0, 1] and n > 0, got h={h}, n={n}"));
    }
    let unit = 1.0 / (n as f64).sqrt();
    let cut = h * unit;
    Ok(est.map(|x| if x.abs() > cut { x.signum() * unit } else { 0.0 }))
}
