use rie::MeasureModel;
use rie_web::{kernel_density_data, overlap_data, shrinkage_data};

#[test]
fn kernel_density_follows_the_law() {
    let rows = kernel_density_data(300, 600, 1, None, 101).unwrap();
    assert_eq!(rows.len(), 303);
    let (mut err, mut mass, mut count) = (0.0f64, 0.0, 0);
    for r in rows.chunks(3) {
        mass += r[1];
        if r[2] > 0.05 {
            err = err.max((r[1] - r[2]).abs() / r[2]);
            count += 1;
        }
    }
    let dx = rows[3] - rows[0];
    assert!(count > 50);
    assert!(err < 0.25, "{err}");
    assert!((mass * dx - 1.0).abs() < 0.05, "{}", mass * dx);
}

#[test]
fn shrinkage_is_close_to_the_oracle() {
    let out = shrinkage_data(true, 0.0, 1.0, 200, 3).unwrap();
    let (rie, oracle) = (out[0], out[1]);
    assert_eq!(out.len(), 2 + 3 * 200);
    assert!(oracle <= rie && rie < 1.3 * oracle, "{rie} {oracle}");
    let wigner = shrinkage_data(false, 2.0, 2.0, 150, 4).unwrap();
    assert!(wigner[1] <= wigner[0] && wigner[0] < 1.0);
}

#[test]
fn overlap_curve_is_normalized() {
    let points = 2001;
    let rows = overlap_data(1.0, 1.5, points).unwrap();
    let law = MeasureModel::SemicircleEig;
    let dx = rows[2] - rows[0];
    let total: f64 = rows.chunks(2).map(|r| law.density(r[0]) * r[1] * dx).sum();
    assert!((total - 1.0).abs() < 0.01, "{total}");
    assert!(rows.chunks(2).all(|r| r[1] >= 0.0));
    assert!(overlap_data(1.0, -1.0, 10).is_err());
}
