mod common;

use common::{instance, spec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rie::ensembles::{XPrior, YPrior};
use rie::evaluate::*;
use rie::{SingularSpectrum, SpectralEvaluator, C64};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

#[test]
fn sylvester_determinant_identity() {
    let (n, m) = (5, 8);
    let a = complex(&gaussian(m, n, 1));
    let b = complex(&gaussian(n, m, 2));
    for z in [C64::new(0.3, 0.7), C64::new(-1.2, 0.1), C64::new(2.0, -0.5), C64::new(0.0, 1.0), C64::new(4.0, 3.0)] {
        let lhs = z.powi(m as i32) * (DMatrix::identity(n, n) * z - &b * &a).determinant();
        let rhs = z.powi(n as i32) * (DMatrix::identity(m, m) * z - &a * &b).determinant();
        assert!((lhs - rhs).norm() < 1e-8 * lhs.norm(), "{z}: {lhs} vs {rhs}");
    }
}

#[test]
fn svd_reconstructs_with_sign_convention() {
    for (n, m) in [(30, 50), (50, 30), (40, 40)] {
        let s = gaussian(n, m, 3);
        let svd = ObservationSVD::from_observation(&s).unwrap();
        assert!((svd.reconstruct() - &s).amax() < 1e-8 * s.norm());
        for col in svd.u.column_iter() {
            let first = col.iter().find(|x| x.abs() > 1e-14).unwrap();
            assert!(*first > 0.0);
        }
        let g = svd.gammas.gammas();
        assert!(g.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn oracle_beats_perturbations() {
    let s = spec(XPrior::Wishart { aspect: 0.25 }, YPrior::GaussianIid, 60, 90, 1.0, 4);
    let (obs, svd) = instance(&s);
    let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
    let best_x = spectral_mse(&orc.x, &orc.x, orc.x_norm_sq).unwrap().raw_mse;
    let best_y = spectral_mse(&orc.y, &orc.y, orc.y_norm_sq).unwrap().raw_mse;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let scale: f64 = rng.random_range(1e-4..1.0);
        let px: Vec<f64> = orc.x.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let py: Vec<f64> = orc.y.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(best_x <= spectral_mse(&px, &orc.x, orc.x_norm_sq).unwrap().raw_mse);
        assert!(best_y <= spectral_mse(&py, &orc.y, orc.y_norm_sq).unwrap().raw_mse);
    }
}

#[test]
fn spectral_mse_matches_dense_mse() {
    let s = spec(XPrior::ShiftedWigner { c: 1.0 }, YPrior::GaussianIid, 40, 70, 1.0, 6);
    let (obs, svd) = instance(&s);
    let orc = OracleValues::compute(&svd, &obs.x, &obs.y).unwrap();
    let xi_x: Vec<f64> = orc.x.iter().map(|v| 0.8 * v + 0.1).collect();
    let xi_y: Vec<f64> = orc.y.iter().map(|v| 1.1 * v - 0.05).collect();
    let dense = normalized_mse(&svd.assemble_x(&xi_x).unwrap(), &obs.x).unwrap().normalized_mse;
    let fast = spectral_mse(&xi_x, &orc.x, orc.x_norm_sq).unwrap().normalized_mse;
    assert!((dense - fast).abs() < 1e-10);
    let dense = normalized_mse(&svd.assemble_y(&xi_y).unwrap(), &obs.y).unwrap().normalized_mse;
    let fast = spectral_mse(&xi_y, &orc.y, orc.y_norm_sq).unwrap().normalized_mse;
    assert!((dense - fast).abs() < 1e-10);
    let xy = &obs.x * &obs.y;
    let dense = normalized_mse(&svd.assemble_y(&orc.xy).unwrap(), &xy).unwrap().normalized_mse;
    let fast = spectral_mse(&orc.xy, &orc.xy, orc.xy_norm_sq).unwrap().normalized_mse;
    assert!((dense - fast).abs() < 1e-10);
}

#[test]
fn oracles_on_aligned_observations() {
    let h = gaussian(30, 60, 7) / 30f64.sqrt();
    let x = &h * h.transpose();
    let svd = ObservationSVD::from_observation(&x).unwrap();
    let mut eig: Vec<f64> = x.clone().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let xi = oracle_x(&svd, &x).unwrap().xi;
    assert!(xi.iter().zip(&eig).all(|(a, b)| (a - b).abs() < 1e-10));
    for i in [0, 7, 29] {
        for j in 0..30 {
            let o = empirical_overlap_x(&svd, &svd.u, i, j).unwrap();
            let want = if i == j { 30.0 } else { 0.0 };
            assert!((o - want).abs() < 1e-9);
        }
    }

    let y = gaussian(30, 45, 8) / 30f64.sqrt();
    let xy = &x * &y;
    let svd = ObservationSVD::from_observation(&xy).unwrap();
    let xi = oracle_xy(&svd, &x, &y).unwrap().xi;
    let sv = singular_values(&xy);
    assert!(xi.iter().zip(&sv).all(|(a, b)| (a - b).abs() < 1e-10));
}

#[test]
fn overlaps_are_complete() {
    let s = spec(XPrior::ShiftedWigner { c: 1.0 }, YPrior::GaussianIid, 50, 80, 1.0, 9);
    let (obs, svd) = instance(&s);
    let vecs = obs.x.clone().symmetric_eigen().eigenvectors;
    for i in [0, 25, 49] {
        let total: f64 = (0..50).map(|j| empirical_overlap_x(&svd, &vecs, i, j).unwrap()).sum();
        assert!((total / 50.0 - 1.0).abs() < 1e-10);
    }
    let ysvd = obs.y.clone().svd(true, true);
    let (yl, yr) = (ysvd.u.unwrap(), ysvd.v_t.unwrap().transpose());
    let o = empirical_overlap_y(&svd, &yl, &yr, 0, 0).unwrap();
    let direct = 50.0 * svd.u.column(0).dot(&yl.column(0)) * svd.v.column(0).dot(&yr.column(0));
    assert!((o - direct).abs() < 1e-12);
    assert!(empirical_overlap_y(&svd, &yr, &yl, 0, 0).is_err());
}

#[test]
fn resolvent_traces() {
    let (n, m) = (30, 60);
    let s = gaussian(n, m, 10) / (n as f64).sqrt();
    let ev = SpectralEvaluator::new(SingularSpectrum::new(singular_values(&s)[..n].to_vec(), n, m).unwrap());
    let alpha = 0.5;
    for z in [C64::new(1.0, -0.1), C64::new(0.2, 0.5), C64::new(-2.0, -1.0)] {
        let r = hermitize_resolvent(&s, z).unwrap();
        let g = ev.symmetrized_stieltjes(z).unwrap();
        assert!((r.upper_left.trace() / n as f64 - g).norm() < 1e-10);
        assert!((r.lower_right.trace() / m as f64 - (alpha * g + (1.0 - alpha) / z)).norm() < 1e-10);
    }
    assert!(hermitize_resolvent(&s, C64::new(1.0, 0.0)).is_err());
}

#[test]
fn hermitization_block_formula_on_toy() {
    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, -0.7, 2.0]);
    let z = C64::new(0.3, -0.8);
    let mut h = DMatrix::<C64>::zeros(4, 4);
    h.view_mut((0, 2), (2, 2)).copy_from(&complex(&s));
    h.view_mut((2, 0), (2, 2)).copy_from(&complex(&s.transpose()));
    let direct = (DMatrix::<C64>::identity(4, 4) * z - h).try_inverse().unwrap();
    let r = hermitize_resolvent(&s, z).unwrap();
    let mut blocks = DMatrix::<C64>::zeros(4, 4);
    blocks.view_mut((0, 0), (2, 2)).copy_from(&r.upper_left);
    blocks.view_mut((0, 2), (2, 2)).copy_from(&r.upper_right);
    blocks.view_mut((2, 0), (2, 2)).copy_from(&r.lower_left);
    blocks.view_mut((2, 2), (2, 2)).copy_from(&r.lower_right);
    assert!((direct - blocks).iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-13);
}

#[test]
fn rank_two_examples() {
    assert_eq!(rank_two_eigs(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), (2.0, 0.0));
    assert_eq!(rank_two_eigs(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), (1.0, -1.0));
    assert!(rank_two_eigs(&[1.0], &[1.0, 2.0]).is_err());
    let x = DVector::from_column_slice(gaussian(50, 1, 11).as_slice());
    let y = DVector::from_column_slice(gaussian(50, 1, 12).as_slice());
    let mut eig: Vec<f64> = (&x * y.transpose() + &y * x.transpose()).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let (hi, lo) = rank_two_eigs(x.as_slice(), y.as_slice()).unwrap();
    assert!((eig[0] - hi).abs() < 1e-10 && (eig[49] - lo).abs() < 1e-10);
    assert!(eig[1..49].iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn mse_examples_and_errors() {
    let t = gaussian(4, 6, 13);
    assert_eq!(normalized_mse(&t, &t).unwrap().normalized_mse, 0.0);
    assert_eq!(normalized_mse(&DMatrix::zeros(4, 6), &t).unwrap().normalized_mse, 1.0);
    assert!((normalized_mse(&(&t * 2.0), &t).unwrap().normalized_mse - 1.0).abs() < 1e-14);
    assert!(normalized_mse(&t, &DMatrix::zeros(4, 6)).is_err());
    assert!(normalized_mse(&t, &t.transpose()).is_err());
    let svd = ObservationSVD::from_observation(&t).unwrap();
    assert!(oracle_x(&svd, &DMatrix::zeros(3, 3)).is_err());
    assert!(oracle_y(&svd, &DMatrix::zeros(6, 4)).is_err());
    assert!(svd.assemble_y(&[1.0]).is_err());
}

#[test]
fn inverse_iteration_matches_dense_eigenvectors() {
    let s = gaussian(40, 60, 14) / 40f64.sqrt();
    let gram = &s * s.transpose();
    let eig = gram.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..40).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    for k in [3, 20, 36] {
        let i = idx[k];
        let gap = (eig.eigenvalues[idx[k + 1]] - eig.eigenvalues[i]).min(eig.eigenvalues[i] - eig.eigenvalues[idx[k - 1]]);
        let v = gram_eigenvector(&gram, eig.eigenvalues[i], gap).unwrap();
        assert!((v.dot(&eig.eigenvectors.column(i)).abs() - 1.0).abs() < 1e-10);
    }
    let svd = ObservationSVD::from_observation(&s).unwrap();
    let g = svd.gammas.gammas();
    let u = left_singular_vector(&s, g[5], (g[4] - g[5]).min(g[5] - g[6]) * 2.0 * g[5]).unwrap();
    assert!((&u - svd.u.column(5)).amax() < 1e-8);
    assert!(gram_eigenvector(&s, 1.0, 0.1).is_err());
}

proptest! {
    #[test]
    fn oracle_dominance(seed in 0u64..1000, scale in 1e-6f64..1.0) {
        let s = gaussian(12, 18, seed) / 12f64.sqrt();
        let x = { let h = gaussian(12, 12, seed + 1); (&h + h.transpose()) / 24f64.sqrt() };
        let svd = ObservationSVD::from_observation(&s).unwrap();
        let best = svd.assemble_x(&oracle_x(&svd, &x).unwrap().xi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        let other: Vec<f64> = oracle_x(&svd, &x).unwrap().xi.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let worse = svd.assemble_x(&other).unwrap();
        prop_assert!(normalized_mse(&best, &x).unwrap().raw_mse <= normalized_mse(&worse, &x).unwrap().raw_mse + 1e-12);
    }
}
