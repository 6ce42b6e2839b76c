#![allow(dead_code)]

use std::f64::consts::PI;

use rie::ensembles::{synthesize, EnsembleSpec, WPrior, XPrior, YPrior};
use rie::evaluate::ObservationSVD;
use rie::{MeasureModel, ObservationInstance};

pub fn spec(x_prior: XPrior, y_prior: YPrior, n: usize, m: usize, kappa: f64, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        x_prior,
        y_prior,
        w_prior: WPrior::GaussianIid,
        n,
        m,
        kappa,
        seed,
    }
}

pub fn instance(spec: &EnsembleSpec) -> (ObservationInstance, ObservationSVD) {
    let obs = synthesize(spec).unwrap();
    let svd = ObservationSVD::from_observation(&obs.s).unwrap();
    (obs, svd)
}

/// CDF of an absolutely continuous law on its support, by cumulative
/// quadrature in the angle variable x = lo + (hi-lo)(1-cos θ)/2.
pub fn cdf_table(law: &MeasureModel, steps: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = law.support();
    let h = PI / steps as f64;
    let mut acc = 0.0;
    let mut out = vec![(lo, 0.0)];
    for k in 0..steps {
        let t = (k as f64 + 0.5) * h;
        let x = lo + (hi - lo) * (1.0 - t.cos()) / 2.0;
        acc += law.density(x) * (hi - lo) * t.sin() / 2.0 * h;
        let right = lo + (hi - lo) * (1.0 - ((k + 1) as f64 * h).cos()) / 2.0;
        out.push((right, acc));
    }
    out
}

fn interp(table: &[(f64, f64)], x: f64) -> f64 {
    match table.iter().position(|(t, _)| *t >= x) {
        None => 1.0,
        Some(0) => 0.0,
        Some(i) => {
            let (x0, y0) = table[i - 1];
            let (x1, y1) = table[i];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }
}

/// Kolmogorov-Smirnov distance between a sample and a law.
pub fn ks_distance(sample: &[f64], law: &MeasureModel) -> f64 {
    let table = cdf_table(law, 20_000);
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = interp(&table, *x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
