//! Rotation-invariant estimators for the symmetric factor X and for X².
//!
//! For each singular value γ of S the saddle-point parameters ζ₁, ζ₃ are
//! solved at z = γ - iη. ζ₁ follows from the data and μ_W directly; ζ₃ solves
//! a scalar equation involving the rectangular R-transform of μ_Y.

use crate::error::{arg, Result, RieError};
use crate::roots::{newton, NewtonOptions, SolveOptions};
use crate::spectrum::{fill_from_nearest, Regime, SpectralEvaluator, DENSITY_FLOOR};
use crate::transforms::MeasureModel;
use crate::{map_indices, C64};

/// Offset used for the z -> -i0⁺ limit that defines the zero modes (α > 1).
pub const ZERO_MODE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XParams {
    pub z: C64,
    pub zeta1: C64,
    pub zeta2: C64,
    pub zeta3: C64,
    pub p1: C64,
    pub p2: C64,
    pub p3: C64,
    /// Symmetrized Stieltjes transform of the singular values at z.
    pub g: C64,
    pub alpha: f64,
    /// Residual of the ζ₃ solve (scale·|M_Y(u) - A/scale|), zero for the
    /// closed form.
    pub residual: f64,
}

impl XParams {
    fn pref(&self) -> f64 {
        if self.alpha > 1.0 {
            self.alpha
        } else {
            1.0
        }
    }

    /// π μ̄_S(γ) as estimated at this point.
    pub fn pi_density(&self) -> f64 {
        self.g.im
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XEstimate {
    /// One value per left singular vector of S (N values).
    pub xi: Vec<f64>,
    pub xi2: Option<Vec<f64>>,
    /// Modes whose value was replaced by a neighbour's: edge modes and
    /// modes where the solver failed.
    pub edge_flags: Vec<bool>,
    pub params_per_mode: Vec<Option<XParams>>,
    /// Modes clamped at zero by `sqrt_psd_estimate`.
    pub negative_clamped: usize,
    pub solver_failures: usize,
    pub max_residual: f64,
}

impl XEstimate {
    pub fn edge_count(&self) -> usize {
        self.edge_flags.iter().filter(|f| **f).count()
    }
}

fn is_gaussian(law: &MeasureModel, alpha: f64) -> bool {
    matches!(law, MeasureModel::GaussianIidSingular { aspect } if (aspect - alpha).abs() < 1e-12)
}

fn check_z(z: C64) -> Result<()> {
    if !(z.im < 0.0) || !z.is_finite() {
        return arg(format!("evaluation point must lie below the real axis, got {z}"));
    }
    Ok(())
}

/// Solves the saddle-point parameters at `z` given g = 𝒢_{μ̄_S}(z).
pub fn solve_x_params_at(
    g: C64,
    z: C64,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    alpha: f64,
    opts: &SolveOptions,
) -> Result<XParams> {
    check_z(z)?;
    let reg = Regime::new(alpha)?;
    let (p1, p2) = reg.traces(g, z);
    let zeta2 = if alpha <= 1.0 {
        alpha * z * (z * g - 1.0) / (alpha * z * g + 1.0 - alpha)
    } else {
        z - 1.0 / g
    };
    let zeta1 = if opts.closed_forms && is_gaussian(mu_w, alpha) {
        p2 / alpha
    } else {
        mu_w.rect_c_transform(reg.aspect, p1 * p2)? * reg.scale / p1
    };
    let a = (z - zeta1) * p1 - 1.0;
    let seed = p2 / alpha;
    let (zeta3, residual) = if opts.closed_forms && is_gaussian(mu_y, alpha) {
        (seed, 0.0)
    } else {
        // scale·𝒞_Y(p₂A/ζ₃) = A, solved for the argument directly
        let (w, residual) = mu_y.rect_c_inverse_with_residual(reg.aspect, a / reg.scale)?;
        (p2 * a / w, residual * reg.scale)
    };
    if !(zeta3.is_finite() && zeta1.is_finite()) || zeta3.norm() == 0.0 {
        return Err(RieError::Solver {
            what: "zeta parameters",
            iterations: 0,
            residual: f64::NAN,
        });
    }
    Ok(XParams {
        z,
        zeta1,
        zeta2,
        zeta3,
        p1,
        p2,
        p3: a / zeta3,
        g,
        alpha,
        residual,
    })
}

/// Saddle-point parameters at `z`, with 𝒢_{μ̄_S}(z) taken from the kernel
/// estimate.
pub fn solve_x_params(
    ev: &SpectralEvaluator,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    z: C64,
    alpha: f64,
) -> Result<XParams> {
    let g = ev.symmetrized_stieltjes(z)?;
    solve_x_params_at(g, z, mu_y, mu_w, alpha, &SolveOptions::default())
}

/// Im{(1/ζ₃)[𝒢_ρ(r) + 𝒢_ρ(-r)]}, r = √((z-ζ₁)/(κζ₃)). The bracket is even
/// in r, so the branch of the root does not matter.
fn x_kernel(p: &XParams, rho_x: &MeasureModel, kappa: f64) -> Result<f64> {
    let r = ((p.z - p.zeta1) / (p.zeta3 * kappa)).sqrt();
    let s = rho_x.stieltjes(r)? + rho_x.stieltjes(-r)?;
    Ok((s / p.zeta3).im)
}

fn x2_kernel(p: &XParams) -> f64 {
    p.p3.im
}

struct ModeRun {
    params: Vec<Option<XParams>>,
    values: Vec<f64>,
    bad: Vec<bool>,
    failures: usize,
    max_residual: f64,
}

/// Evaluates `value(params)` at every mode. Bulk modes use z = γ - iη and
/// divide by κπμ̄_S(γ); the N - M zero modes of the α > 1 regime use the
/// z -> -i0⁺ limit.
fn run_modes<F>(
    ev: &SpectralEvaluator,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    kappa: f64,
    opts: &SolveOptions,
    value: F,
) -> Result<ModeRun>
where
    F: Fn(&XParams) -> Result<f64> + Sync + Send,
{
    if !(kappa > 0.0 && kappa.is_finite()) {
        return arg(format!("kappa must be positive, got {kappa}"));
    }
    let sp = ev.spectrum();
    let (n, k) = (sp.n(), sp.k());
    let alpha = sp.alpha();
    let gammas = sp.gammas();
    let bulk = map_indices(k, |i| -> (Option<XParams>, f64, bool, bool) {
        let z = ev.point(gammas[i]);
        let g = match ev.symmetrized_stieltjes(z) {
            Ok(g) => g,
            Err(_) => return (None, 0.0, true, true),
        };
        let edge = g.im / std::f64::consts::PI < DENSITY_FLOOR;
        let res = solve_x_params_at(g, z, mu_y, mu_w, alpha, opts)
            .and_then(|p| value(&p).map(|v| (p, v * p.pref() / (kappa * g.im))));
        match res {
            Ok((p, v)) if v.is_finite() => (Some(p), v, edge, false),
            Ok((p, _)) => (Some(p), 0.0, true, true),
            Err(_) => (None, 0.0, true, true),
        }
    });
    let mut params = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut bad = Vec::with_capacity(n);
    let mut failures = 0;
    for (p, v, b, failed) in bulk {
        params.push(p);
        values.push(v);
        bad.push(b);
        failures += failed as usize;
    }
    fill_from_nearest(&mut values, &bad)?;
    if n > k {
        let eps = ZERO_MODE_EPS;
        let z = C64::new(0.0, -eps);
        let g = ev.symmetrized_stieltjes(z)?;
        let p = solve_x_params_at(g, z, mu_y, mu_w, alpha, opts)?;
        let v = value(&p)? * eps * alpha / (kappa * (alpha - 1.0));
        for _ in k..n {
            params.push(Some(p));
            values.push(v);
            bad.push(false);
        }
    }
    let max_residual = params.iter().flatten().map(|p| p.residual).fold(0.0, f64::max);
    Ok(ModeRun {
        params,
        values,
        bad,
        failures,
        max_residual,
    })
}

/// Eigenvalues of the RIE for X, ordered like the left singular vectors of S.
pub fn estimate_x_with(
    ev: &SpectralEvaluator,
    rho_x: &MeasureModel,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    kappa: f64,
    opts: &SolveOptions,
) -> Result<XEstimate> {
    rho_x.validate()?;
    let n = ev.spectrum().n();
    if rho_x.is_symmetric() {
        return Ok(XEstimate {
            xi: vec![0.0; n],
            xi2: None,
            edge_flags: vec![false; n],
            params_per_mode: vec![None; n],
            negative_clamped: 0,
            solver_failures: 0,
            max_residual: 0.0,
        });
    }
    let run = run_modes(ev, mu_y, mu_w, kappa, opts, |p| Ok(0.5 * x_kernel(p, rho_x, kappa)?))?;
    Ok(XEstimate {
        xi: run.values,
        xi2: None,
        edge_flags: run.bad,
        params_per_mode: run.params,
        negative_clamped: 0,
        solver_failures: run.failures,
        max_residual: run.max_residual,
    })
}

pub fn estimate_x(
    ev: &SpectralEvaluator,
    rho_x: &MeasureModel,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    kappa: f64,
) -> Result<XEstimate> {
    estimate_x_with(ev, rho_x, mu_y, mu_w, kappa, &SolveOptions::default())
}

/// Eigenvalues of the RIE for X²; needs only μ_Y and μ_W.
pub fn estimate_x2_with(
    ev: &SpectralEvaluator,
    mu_y: &MeasureModel,
    mu_w: &MeasureModel,
    kappa: f64,
    opts: &SolveOptions,
) -> Result<XEstimate> {
    let run = run_modes(ev, mu_y, mu_w, kappa, opts, |p| Ok(x2_kernel(p)))?;
    Ok(XEstimate {
        xi: run.values.clone(),
        xi2: Some(run.values),
        edge_flags: run.bad,
        params_per_mode: run.params,
        negative_clamped: 0,
        solver_failures: run.failures,
        max_residual: run.max_residual,
    })
}

pub fn estimate_x2(ev: &SpectralEvaluator, mu_y: &MeasureModel, mu_w: &MeasureModel, kappa: f64) -> Result<XEstimate> {
    estimate_x2_with(ev, mu_y, mu_w, kappa, &SolveOptions::default())
}

/// X² eigenvalue estimate for Gaussian Y and W (α ≤ 1) written directly in
/// terms of 𝒢_{μ̄_S}(z) = π(ℋ + iμ̄). With ζ = 𝒢 + (1-α)/(αz) this is
/// (1/κ)[Im ζ/(α|ζ|² Im 𝒢) - 1 - η/Im 𝒢], which for real z reduces to
/// (1/κ)[-1 + 1/(α(π²μ̄² + (πℋ + (1-α)/(αγ))²))].
pub fn x2_gaussian_closed_form(g: C64, z: C64, alpha: f64, kappa: f64) -> f64 {
    let zeta = g + (1.0 - alpha) / (alpha * z);
    let eta = -z.im;
    (zeta.im / (alpha * zeta.norm_sqr() * g.im) - 1.0 - eta / g.im) / kappa
}

/// √max(ξ̂_{x²}, 0) per mode, counting clamped modes.
pub fn sqrt_psd_estimate(est: &XEstimate) -> Result<XEstimate> {
    let xi2 = est
        .xi2
        .as_ref()
        .ok_or_else(|| RieError::Estimation("sqrt_psd_estimate needs an X² estimate".into()))?;
    let negative = xi2.iter().filter(|v| **v < 0.0).count();
    Ok(XEstimate {
        xi: xi2.iter().map(|v| v.max(0.0).sqrt()).collect(),
        xi2: Some(xi2.clone()),
        negative_clamped: negative,
        ..est.clone()
    })
}

/// Rescaled squared overlap N·E[(uᵀx)²] between a left singular vector of S
/// at the point of `params` and an eigenvector of X with eigenvalue λ.
pub fn overlap_x_theory(params: &XParams, lambda: f64, kappa: f64) -> f64 {
    let d = params.z - params.zeta1 - params.zeta3 * kappa * lambda * lambda;
    params.pref() * (1.0 / d).im / params.pi_density()
}

/// ζ₁ (= ζ₃) for Gaussian Y and W from the self-consistent equation
/// 𝒢_{κX²}(z/ζ - 1) = ζ² + (1 - 1/α)ζ/z, which involves only ρ_{X²} and no
/// data. Newton is started at `start`.
pub fn self_consistent_zeta1(rho_x2: &MeasureModel, kappa: f64, z: C64, alpha: f64, start: C64) -> Result<C64> {
    let law = MeasureModel::scaled(rho_x2.clone(), kappa)?;
    let root = newton(
        "self-consistent zeta1",
        |zeta| Ok(law.stieltjes(z / zeta - 1.0)? - (zeta * zeta + (1.0 - 1.0 / alpha) * zeta / z)),
        start,
        NewtonOptions::default(),
    )?;
    Ok(root.z)
}

/// The same equation in R-transform form; returns its residual at ζ.
pub fn self_consistent_residual(rho_x2: &MeasureModel, kappa: f64, z: C64, alpha: f64, zeta: C64) -> Result<C64> {
    let law = MeasureModel::scaled(rho_x2.clone(), kappa)?;
    let w = zeta * zeta + (1.0 - 1.0 / alpha) * zeta / z;
    Ok(z / zeta - 1.0 - 1.0 / w - law.r_transform(w)?)
}
