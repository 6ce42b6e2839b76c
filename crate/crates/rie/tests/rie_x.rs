mod common;

use common::{correlation, instance, spec};
use proptest::prelude::*;
use rie::ensembles::{XPrior, YPrior};
use rie::evaluate::{spectral_mse, ObservationSVD, OracleValues};
use rie::rie_x::*;
use rie::roots::SolveOptions;
use rie::{MeasureModel, SpectralEvaluator, C64};

fn general() -> SolveOptions {
    SolveOptions {
        closed_forms: false,
        ..SolveOptions::default()
    }
}

fn gaussian(alpha: f64) -> MeasureModel {
    MeasureModel::gaussian_singular(alpha).unwrap()
}

#[test]
fn general_solver_reproduces_gaussian_closed_form() {
    for (n, m) in [(200, 400), (400, 200)] {
        let s = spec(XPrior::Wishart { aspect: 0.25 }, YPrior::GaussianIid, n, m, 1.0, 1);
        let (_, svd) = instance(&s);
        let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
        let alpha = n as f64 / m as f64;
        let gl = gaussian(alpha);
        let mut worst = 0.0f64;
        for &gamma in svd.gammas.gammas().iter().step_by(7) {
            let z = ev.point(gamma);
            let g = ev.symmetrized_stieltjes(z).unwrap();
            let a = solve_x_params_at(g, z, &gl, &gl, alpha, &SolveOptions::default()).unwrap();
            let b = solve_x_params_at(g, z, &gl, &gl, alpha, &general()).unwrap();
            worst = worst.max((a.zeta1 - b.zeta1).norm()).max((a.zeta3 - b.zeta3).norm());
            if alpha <= 1.0 {
                assert_eq!(a.zeta1, a.zeta3);
                assert!((a.zeta1 - (g + (1.0 - alpha) / (alpha * z))).norm() < 1e-12);
            }
        }
        assert!(worst < 1e-9, "alpha {alpha}: {worst}");
        let rho = MeasureModel::marchenko_pastur(0.25).unwrap();
        let ea = estimate_x_with(&ev, &rho, &gl, &gl, 1.0, &SolveOptions::default()).unwrap();
        let eb = estimate_x_with(&ev, &rho, &gl, &gl, 1.0, &general()).unwrap();
        let d = ea.xi.iter().zip(&eb.xi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-8, "alpha {alpha}: {d}");
    }
}

#[test]
fn self_consistent_zeta_agrees_with_solver() {
    let (alpha, kappa) = (0.5, 1.0);
    let rho2 = MeasureModel::squared(MeasureModel::SemicircleEig);
    let gl = gaussian(alpha);
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 1000, 2000, kappa, 2);
    let (_, svd) = instance(&s);
    let ev = SpectralEvaluator::new(svd.gammas.clone());
    for gamma in [0.8, 1.5, 2.5] {
        let z = C64::new(gamma, -0.02);
        let kernel = solve_x_params(&ev, &gl, &gl, z, alpha).unwrap();
        let zeta = self_consistent_zeta1(&rho2, kappa, z, alpha, kernel.zeta1).unwrap();
        assert!((zeta - kernel.zeta1).norm() < 0.05 * zeta.norm(), "{zeta} vs {}", kernel.zeta1);
        // feed the 𝒢 implied by the limiting ζ back through the data-driven path
        let g = zeta - (1.0 - alpha) / (alpha * z);
        let p = solve_x_params_at(g, z, &gl, &gl, alpha, &general()).unwrap();
        assert!((p.zeta1 - zeta).norm() < 1e-9);
        assert!(self_consistent_residual(&rho2, kappa, z, alpha, p.zeta1).unwrap().norm() < 1e-6);
    }
}

#[test]
fn estimates_track_the_oracle() {
    let priors = [
        XPrior::Wishart { aspect: 0.25 },
        XPrior::ShiftedWigner { c: 3.0 },
        XPrior::BernoulliSpectralHaar { p: 0.5 },
    ];
    for prior in priors {
        let s = spec(prior.clone(), YPrior::GaussianIid, 500, 1000, 2.0, 3);
        let (obs, svd) = instance(&s);
        let gl = gaussian(0.5);
        let rho = prior.spectral_law().unwrap();
        let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
        let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
        let r = correlation(&estimate_x(&ev, &rho, &gl, &gl, 2.0).unwrap().xi, &orc.x);
        assert!(r > 0.98, "{prior:?}: {r}");
        // at N=500 the kernel is still noisy; a wider window clears 0.99
        let wide = SpectralEvaluator::with_eta(svd.gammas.clone(), 2.0 * ev.eta()).unwrap();
        let r = correlation(&estimate_x(&wide, &rho, &gl, &gl, 2.0).unwrap().xi, &orc.x);
        assert!(r > 0.99, "{prior:?} wide: {r}");
    }
}

#[test]
fn wishart_mse_near_published_level() {
    let s = spec(XPrior::Wishart { aspect: 0.25 }, YPrior::GaussianIid, 1000, 2000, 1.0, 4);
    let (obs, svd) = instance(&s);
    let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
    let gl = gaussian(0.5);
    let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
    let est = estimate_x(&ev, &MeasureModel::marchenko_pastur(0.25).unwrap(), &gl, &gl, 1.0).unwrap();
    let mse = spectral_mse(&est.xi, &orc.x, orc.x_norm_sq).unwrap().normalized_mse;
    assert!((mse - 0.071).abs() < 0.005, "{mse}");

    let x2 = estimate_x2(&ev, &gl, &gl, 1.0).unwrap();
    let xu = &obs.x * &svd.u;
    let o2: Vec<f64> = (0..1000).map(|i| xu.column(i).norm_squared()).collect();
    let mse2 = spectral_mse(&x2.xi, &o2, (&obs.x * &obs.x).norm_squared()).unwrap().normalized_mse;
    assert!((mse2 - 0.173).abs() < 0.01, "{mse2}");
    let sq = sqrt_psd_estimate(&x2).unwrap();
    let mse_sq = spectral_mse(&sq.xi, &orc.x, orc.x_norm_sq).unwrap().normalized_mse;
    assert!(mse_sq > mse);
}

#[test]
fn x2_closed_form_matches_general_path() {
    let s = spec(XPrior::ShiftedWigner { c: 1.0 }, YPrior::GaussianIid, 300, 600, 1.5, 5);
    let (_, svd) = instance(&s);
    let ev = SpectralEvaluator::new(svd.gammas.clone());
    let gl = gaussian(0.5);
    let a = estimate_x2_with(&ev, &gl, &gl, 1.5, &general()).unwrap();
    for (i, p) in a.params_per_mode.iter().enumerate() {
        if a.edge_flags[i] {
            continue;
        }
        let p = p.unwrap();
        let closed = x2_gaussian_closed_form(p.g, p.z, 0.5, 1.5);
        assert!((closed - a.xi[i]).abs() < 1e-8, "mode {i}");
    }
}

#[test]
fn zero_modes_share_one_value() {
    let s = spec(XPrior::Wishart { aspect: 0.25 }, YPrior::GaussianIid, 300, 150, 1.0, 6);
    let (obs, svd) = instance(&s);
    let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
    let gl = gaussian(2.0);
    let est = estimate_x(&ev, &MeasureModel::marchenko_pastur(0.25).unwrap(), &gl, &gl, 1.0).unwrap();
    assert_eq!(est.xi.len(), 300);
    let z = &est.xi[150..];
    assert!(z.iter().all(|v| *v == z[0]));
    let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
    let mean: f64 = orc.x[150..].iter().sum::<f64>() / 150.0;
    assert!((z[0] - mean).abs() < 0.05 * mean, "{} vs {mean}", z[0]);
}

#[test]
fn theory_overlap_normalizes() {
    // data-free ζ for Gaussian factors: the sum over the spectrum of X is 1
    // up to the sampling error of the eigenvalues
    let (alpha, kappa) = (0.5, 1.0);
    let rho2 = MeasureModel::squared(MeasureModel::SemicircleEig);
    let gl = gaussian(alpha);
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 1000, 2000, kappa, 7);
    let (obs, svd) = instance(&s);
    let ev = SpectralEvaluator::new(svd.gammas.clone());
    let lambdas: Vec<f64> = obs.x.clone().symmetric_eigenvalues().iter().copied().collect();
    for i in (50..950).step_by(50) {
        let gamma = svd.gammas.gammas()[i];
        let start = solve_x_params(&ev, &gl, &gl, ev.point(gamma), alpha).unwrap().zeta1;
        let z = C64::new(gamma, -1e-6);
        let zeta = self_consistent_zeta1(&rho2, kappa, z, alpha, start).unwrap();
        let g = zeta - (1.0 - alpha) / (alpha * z);
        let p = solve_x_params_at(g, z, &gl, &gl, alpha, &SolveOptions::default()).unwrap();
        let total: f64 = lambdas.iter().map(|l| overlap_x_theory(&p, *l, kappa)).sum::<f64>() / 1000.0;
        assert!((total - 1.0).abs() < 0.02, "mode {i}: {total}");
    }
}

#[test]
fn rotation_covariance() {
    let s = spec(XPrior::ShiftedWigner { c: 2.0 }, YPrior::GaussianIid, 100, 150, 1.0, 8);
    let (obs, svd) = instance(&s);
    let q = rie::ensembles::haar_orthogonal(100, 1).unwrap();
    let v = rie::ensembles::haar_orthogonal(150, 2).unwrap();
    let rotated = ObservationSVD::from_observation(&(&q * &obs.s * v.transpose())).unwrap();
    let gl = gaussian(100.0 / 150.0);
    let rho = MeasureModel::shifted_wigner(2.0);
    let est = |svd: &ObservationSVD| {
        let ev = SpectralEvaluator::new(svd.gammas.clone());
        svd.assemble_x(&estimate_x(&ev, &rho, &gl, &gl, 1.0).unwrap().xi).unwrap()
    };
    let expect = &q * est(&svd) * q.transpose();
    assert!((est(&rotated) - expect).amax() < 1e-8);
}

#[test]
fn rejects_bad_inputs() {
    let s = spec(XPrior::ShiftedWigner { c: 2.0 }, YPrior::GaussianIid, 20, 40, 1.0, 9);
    let (_, svd) = instance(&s);
    let ev = SpectralEvaluator::new(svd.gammas.clone());
    let gl = gaussian(0.5);
    let rho = MeasureModel::shifted_wigner(2.0);
    assert!(estimate_x(&ev, &rho, &gl, &gl, 0.0).is_err());
    assert!(solve_x_params(&ev, &gl, &gl, C64::new(1.0, 0.1), 0.5).is_err());
}

proptest! {
    #[test]
    fn overlap_even_in_lambda(re in 0.3f64..3.0, im in 0.01f64..0.5, lambda in -4.0f64..4.0, kappa in 0.1f64..5.0) {
        let gl = gaussian(0.5);
        let z = C64::new(re, -im);
        // any admissible 𝒢 value with positive imaginary part
        let g = C64::new(0.3 * re, 0.2 + im);
        let p = solve_x_params_at(g, z, &gl, &gl, 0.5, &SolveOptions::default()).unwrap();
        let a = overlap_x_theory(&p, lambda, kappa);
        let b = overlap_x_theory(&p, -lambda, kappa);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn uniform_y_estimate_tracks_oracle() {
    let yl = MeasureModel::uniform_singular(1.0, 3.0).unwrap();
    let rho = MeasureModel::shifted_wigner(3.0);
    for (m, kappa) in [(150, 0.5), (600, 3.0)] {
        let s = spec(XPrior::ShiftedWigner { c: 3.0 }, YPrior::HaarWithSingulars(yl.clone()), 300, m, kappa, 7);
        let (obs, svd) = instance(&s);
        let ev = SpectralEvaluator::scale_aware(svd.gammas.clone());
        let w = gaussian(300.0 / m as f64);
        let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
        let est = estimate_x(&ev, &rho, &yl, &w, kappa).unwrap();
        assert_eq!(est.solver_failures, 0);
        assert!(est.max_residual < 1e-8, "{}", est.max_residual);
        let got = spectral_mse(&est.xi, &orc.x, orc.x_norm_sq).unwrap().normalized_mse;
        let best = spectral_mse(&orc.x, &orc.x, orc.x_norm_sq).unwrap().normalized_mse;
        // a Gaussian μ_Y here gives roughly ten times the oracle error
        assert!(got < 1.25 * best, "m={m}: {got} vs oracle {best}");
    }
}
