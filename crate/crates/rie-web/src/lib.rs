//! Browser bindings for three small demos: the kernel estimate of a noise
//! spectrum, X shrinkage against the oracle, and the theoretical overlap
//! between a singular vector of S and the eigenvectors of X.
//!
//! Every export returns a flat `Float64Array`; layouts are documented per
//! function. The plain `*_data` functions hold the logic and are tested
//! natively.

use wasm_bindgen::prelude::*;

use rie::evaluate::{singular_values, spectral_mse, ObservationSVD, OracleValues};
use rie::rie_x::{estimate_x, overlap_x_theory, self_consistent_zeta1, solve_x_params_at};
use rie::roots::SolveOptions;
use rie::{ensembles, EnsembleSpec, MeasureModel, SingularSpectrum, SpectralEvaluator, WPrior, XPrior, YPrior, C64};

fn js(e: rie::RieError) -> JsError {
    JsError::new(&e.to_string())
}

fn spec(x_prior: XPrior, n: usize, m: usize, kappa: f64, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        x_prior,
        y_prior: YPrior::GaussianIid,
        w_prior: WPrior::GaussianIid,
        n,
        m,
        kappa,
        seed,
    }
}

/// Rows of (x, kernel density, limiting density) on `points` points across
/// the support of the symmetrized singular law of an n x m Gaussian matrix.
pub fn kernel_density_data(n: usize, m: usize, seed: u64, eta: Option<f64>, points: usize) -> rie::Result<Vec<f64>> {
    let w = ensembles::sample_w(&spec(XPrior::WignerSym, n, m, 0.0, seed), seed)?;
    let spectrum = SingularSpectrum::new(singular_values(&w)[..n.min(m)].to_vec(), n, m)?;
    let ev = match eta {
        Some(eta) => SpectralEvaluator::with_eta(spectrum, eta)?,
        None => SpectralEvaluator::new(spectrum),
    };
    let law = MeasureModel::gaussian_singular(n as f64 / m as f64)?;
    let hi = law.support().1 * 1.1;
    let mut out = Vec::with_capacity(3 * points);
    for i in 0..points {
        let x = -hi + 2.0 * hi * i as f64 / (points.max(2) - 1) as f64;
        // the singular law has an atom-free density split evenly over ±x
        out.extend([x, ev.density_and_hilbert(x).density, 0.5 * law.density(x.abs())]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn kernel_density(n: usize, m: usize, seed: u32, eta: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let eta = (eta > 0.0).then_some(eta);
    kernel_density_data(n, m, seed as u64, eta, points).map_err(js)
}

/// Layout: [mse_rie, mse_oracle, then (γ_i, ξ̂_i, ξ*_i) for each mode].
/// X is Wishart with aspect 1/4 or a Wigner matrix shifted by `shift`.
pub fn shrinkage_data(wishart: bool, shift: f64, kappa: f64, n: usize, seed: u64) -> rie::Result<Vec<f64>> {
    let prior = if wishart {
        XPrior::Wishart { aspect: 0.25 }
    } else {
        XPrior::ShiftedWigner { c: shift }
    };
    let rho = prior.spectral_law().expect("closed-form priors");
    let obs = ensembles::synthesize(&spec(prior, n, 2 * n, kappa, seed))?;
    let svd = ObservationSVD::from_observation(&obs.s)?;
    let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
    let g = MeasureModel::gaussian_singular(0.5)?;
    let est = estimate_x(&ev, &rho, &g, &g, kappa)?;
    let orc = OracleValues::compute(&svd, &obs.x, &obs.y)?;
    let mut out = vec![
        spectral_mse(&est.xi, &orc.x, orc.x_norm_sq)?.normalized_mse,
        spectral_mse(&orc.x, &orc.x, orc.x_norm_sq)?.normalized_mse,
    ];
    for (i, gamma) in svd.gammas.gammas().iter().enumerate() {
        out.extend([*gamma, est.xi[i], orc.x[i]]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn shrinkage(wishart: bool, shift: f64, kappa: f64, n: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    shrinkage_data(wishart, shift, kappa, n, seed as u64).map_err(js)
}

/// Limiting rescaled overlap N(uᵀx)² between the left singular vector of S
/// at singular value `gamma` and the eigenvector of a Wigner X at λ, for
/// Gaussian Y and W with N/M = 1/2. Rows of (λ, overlap).
pub fn overlap_data(kappa: f64, gamma: f64, points: usize) -> rie::Result<Vec<f64>> {
    if !(gamma > 0.0 && kappa > 0.0) {
        return Err(rie::RieError::Argument("gamma and kappa must be positive".into()));
    }
    let alpha = 0.5;
    let rho2 = MeasureModel::squared(MeasureModel::SemicircleEig);
    let gl = MeasureModel::gaussian_singular(alpha)?;
    let z = C64::new(gamma, -1e-6);
    // continue the root in from far below the axis, where ζ ≈ 1/z
    let mut zeta = C64::new(0.0, 0.0);
    for step in 0..=20 {
        let t = step as f64 / 20.0;
        let zt = C64::new(gamma, -(1e-6 + (1.0 - t) * 3.0));
        let start = if step == 0 { 1.0 / zt } else { zeta };
        zeta = self_consistent_zeta1(&rho2, kappa, zt, alpha, start)?;
    }
    let p = solve_x_params_at(zeta - (1.0 - alpha) / (alpha * z), z, &gl, &gl, alpha, &SolveOptions::default())?;
    let mut out = Vec::with_capacity(2 * points);
    for i in 0..points {
        let lambda = -2.0 + 4.0 * i as f64 / (points.max(2) - 1) as f64;
        out.extend([lambda, overlap_x_theory(&p, lambda, kappa)]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn overlap(kappa: f64, gamma: f64, points: usize) -> Result<Vec<f64>, JsError> {
    overlap_data(kappa, gamma, points).map_err(js)
}
