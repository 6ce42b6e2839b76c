mod common;

use common::{ks_distance, spec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rie::ensembles::*;
use rie::evaluate::singular_values;
use rie::MeasureModel;

fn eigenvalues(x: &DMatrix<f64>) -> Vec<f64> {
    x.clone().symmetric_eigenvalues().iter().copied().collect()
}

#[test]
fn haar_small_and_orthogonal() {
    let q = haar_orthogonal(1, 3).unwrap();
    assert_eq!(q[(0, 0)].abs(), 1.0);
    let q = haar_orthogonal(200, 4).unwrap();
    let e = q.transpose() * &q - DMatrix::identity(200, 200);
    assert!(e.amax() < 1e-10);
    assert!(haar_orthogonal(0, 1).is_err());
}

#[test]
fn haar_first_column_moments() {
    let (dim, draws) = (20usize, 1000u64);
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for s in 0..draws {
        let q = haar_orthogonal(dim, s).unwrap();
        for i in 0..dim {
            sum[i] += q[(i, 0)];
            sq[i] += q[(i, 0)] * q[(i, 0)];
        }
    }
    // q² ~ Beta(1/2, (d-1)/2): mean 1/d, variance 2(d-1)/(d²(d+2))
    let mean_sd = (1.0 / (dim as f64 * draws as f64)).sqrt();
    let d = dim as f64;
    let var_sd = (2.0 * (d - 1.0) / (d + 2.0)).sqrt() / d / (draws as f64).sqrt();
    for i in 0..dim {
        assert!((sum[i] / draws as f64).abs() < 4.0 * mean_sd);
        assert!((sq[i] / draws as f64 - 1.0 / dim as f64).abs() < 4.0 * var_sd);
    }
}

#[test]
fn wigner_spectrum_stays_in_support() {
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 1000, 1000, 1.0, 2);
    let ev = eigenvalues(&sample_x(&s, 2).unwrap());
    assert!(ev.iter().all(|l| l.abs() < 2.2));
}

#[test]
fn wishart_matches_marchenko_pastur() {
    let s = spec(XPrior::Wishart { aspect: 0.25 }, YPrior::GaussianIid, 1000, 2000, 1.0, 3);
    let ev = eigenvalues(&sample_x(&s, 3).unwrap());
    let d = ks_distance(&ev, &MeasureModel::marchenko_pastur(0.25).unwrap());
    assert!(d < 0.05, "KS {d}");
}

#[test]
fn sqrt_wishart_squares_to_wishart_law() {
    let s = spec(XPrior::SqrtWishart { aspect: 0.25 }, YPrior::GaussianIid, 400, 800, 1.0, 3);
    let x = sample_x(&s, 3).unwrap();
    let ev: Vec<f64> = eigenvalues(&x);
    assert!(ev.iter().all(|l| *l > 0.0));
    let sq: Vec<f64> = ev.iter().map(|l| l * l).collect();
    assert!(ks_distance(&sq, &MeasureModel::marchenko_pastur(0.25).unwrap()) < 0.07);
}

#[test]
fn bernoulli_spectrum_is_a_projection() {
    let s = spec(XPrior::BernoulliSpectralHaar { p: 0.5 }, YPrior::GaussianIid, 200, 300, 1.0, 4);
    let x = sample_x(&s, 4).unwrap();
    assert!((&x * &x - &x).amax() < 1e-10);
    let rank: f64 = (0..200).map(|i| x[(i, i)]).sum();
    assert!((rank / 200.0 - 0.5).abs() < 0.1);
}

#[test]
fn uniform_singular_values_in_range() {
    let law = MeasureModel::uniform_singular(1.0, 3.0).unwrap();
    let s = spec(XPrior::WignerSym, YPrior::HaarWithSingulars(law), 200, 400, 1.0, 5);
    let sv = singular_values(&sample_y(&s, 5).unwrap());
    assert!(sv.iter().all(|v| *v > 1.0 - 1e-10 && *v < 3.0 + 1e-10));
}

#[test]
fn gaussian_factor_matches_marchenko_pastur() {
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 1000, 2000, 1.0, 6);
    let sq: Vec<f64> = singular_values(&sample_y(&s, 6).unwrap()).iter().map(|v| v * v).collect();
    let d = ks_distance(&sq, &MeasureModel::marchenko_pastur(0.5).unwrap());
    assert!(d < 0.05, "KS {d}");
}

#[test]
fn bernoulli_rademacher_sparsity() {
    let s = spec(XPrior::WignerSym, YPrior::BernoulliRademacher { p: 0.9 }, 1000, 2000, 1.0, 7);
    let y = sample_y(&s, 7).unwrap();
    let zeros = y.iter().filter(|v| **v == 0.0).count() as f64 / y.len() as f64;
    assert!((zeros - 0.9).abs() < 0.01);
    let unit = 1.0 / 1000f64.sqrt();
    assert!(y.iter().all(|v| *v == 0.0 || (v.abs() - unit).abs() < 1e-15));
}

#[test]
fn zero_snr_returns_noise() {
    let s = spec(XPrior::ShiftedWigner { c: 1.0 }, YPrior::GaussianIid, 50, 80, 0.0, 8);
    let obs = synthesize(&s).unwrap();
    assert_eq!(obs.s, obs.w);
}

#[test]
fn synthesis_is_deterministic_and_exact() {
    let s = spec(XPrior::Wishart { aspect: 0.5 }, YPrior::GaussianIid, 60, 90, 2.0, 9);
    let (a, b) = (synthesize(&s).unwrap(), synthesize(&s).unwrap());
    assert_eq!(a.s, b.s);
    let direct = &a.x * &a.y * 2f64.sqrt() + &a.w;
    assert!((direct - &a.s).amax() < 1e-12);
}

#[test]
fn cells_get_distinct_draws() {
    let s1 = spec(XPrior::WignerSym, YPrior::GaussianIid, 30, 40, 1.0, 1);
    let s2 = EnsembleSpec { kappa: 2.0, ..s1.clone() };
    let s3 = EnsembleSpec { seed: 2, ..s1.clone() };
    let w1 = sample_w(&s1, 1).unwrap();
    assert_ne!(w1, sample_w(&s2, 1).unwrap());
    assert_ne!(w1, sample_w(&s3, 2).unwrap());
    assert_ne!(sample_x(&s1, 1).unwrap()[(0, 1)], sample_y(&s1, 1).unwrap()[(0, 1)]);
}

#[test]
fn signal_and_noise_energy_add() {
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 500, 1000, 1.0, 10);
    let obs = synthesize(&s).unwrap();
    let n = 500.0;
    let lhs = obs.s.norm_squared() / n;
    let rhs = obs.w.norm_squared() / n + (&obs.x * &obs.y).norm_squared() / n;
    assert!((lhs / rhs - 1.0).abs() < 0.2);
}

#[test]
fn factor_scales_are_order_one() {
    let s = spec(XPrior::ShiftedWigner { c: 3.0 }, YPrior::GaussianIid, 500, 1000, 1.0, 11);
    let top_x = eigenvalues(&sample_x(&s, 11).unwrap()).into_iter().fold(f64::MIN, f64::max);
    assert!(top_x < 5.0 * 1.1);
    let top_y = singular_values(&sample_y(&s, 11).unwrap())[0];
    assert!(top_y < (1.0 + 2f64.sqrt()) * 1.1);
}

#[test]
fn invalid_priors_rejected() {
    let bad = [
        spec(XPrior::Wishart { aspect: 1.5 }, YPrior::GaussianIid, 10, 10, 1.0, 1),
        spec(XPrior::BernoulliSpectralHaar { p: 1.0 }, YPrior::GaussianIid, 10, 10, 1.0, 1),
        spec(XPrior::WignerSym, YPrior::BernoulliRademacher { p: 1.0 }, 10, 10, 1.0, 1),
        spec(XPrior::WignerSym, YPrior::GaussianIid, 0, 10, 1.0, 1),
        spec(XPrior::WignerSym, YPrior::GaussianIid, 10, 10, -1.0, 1),
    ];
    for s in bad {
        assert!(synthesize(&s).is_err(), "{s:?}");
    }
    let x = DMatrix::zeros(3, 3);
    assert!(observe(&x, &DMatrix::zeros(4, 5), &DMatrix::zeros(4, 5), 1.0).is_err());
}

#[test]
fn dump_roundtrip() {
    let s = spec(XPrior::WignerSym, YPrior::GaussianIid, 7, 11, 1.5, 12);
    let obs = synthesize(&s).unwrap();
    let path = std::env::temp_dir().join(format!("rie-dump-{}.bin", std::process::id()));
    obs.dump(&path).unwrap();
    let mats = read_matrices(&path).unwrap();
    std::fs::write(&path, b"RIEMATS1\x05").unwrap();
    assert!(read_matrices(&path).is_err());
    std::fs::remove_file(&path).ok();
    assert_eq!(mats, vec![obs.x, obs.y, obs.w, obs.s]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samplers_are_pure(seed in 0u64..1000, n in 2usize..12, m in 2usize..12, c in -3.0f64..3.0) {
        let s = spec(XPrior::ShiftedWigner { c }, YPrior::GaussianIid, n, m, 1.0, seed);
        let x = sample_x(&s, seed).unwrap();
        prop_assert_eq!(&x, &sample_x(&s, seed).unwrap());
        prop_assert_eq!(&x, &x.transpose());
        prop_assert_eq!(sample_y(&s, seed).unwrap().shape(), (n, m));
        prop_assert_eq!(sample_w(&s, seed).unwrap(), sample_w(&s, seed).unwrap());
    }
}
