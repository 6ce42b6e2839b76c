//! Observation SVD, oracle estimators, MSE metrics, empirical overlaps and
//! the matrix identities used to check the resolvent relations.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Result, RieError};
use crate::rie_x::XEstimate;
use crate::rie_y::YEstimate;
use crate::spectrum::SingularSpectrum;
use crate::C64;

/// SVD of an N x M observation. `u` is the full N x N left basis (for
/// N > M its last N - M columns span the null space of Sᵀ); `v` holds the
/// K = min(N, M) right singular vectors paired with the columns of `u`.
#[derive(Debug, Clone)]
pub struct ObservationSVD {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub gammas: SingularSpectrum,
}

fn fix_sign(mut col: nalgebra::DVectorViewMut<f64>) -> bool {
    let first = col.iter().copied().find(|x| x.abs() > 1e-14).unwrap_or(0.0);
    if first < 0.0 {
        col.neg_mut();
        true
    } else {
        false
    }
}

fn sorted_desc(values: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps ties in index order
    idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]));
    idx
}

impl ObservationSVD {
    /// Computed from the symmetric eigendecomposition of S Sᵀ; the right
    /// vectors follow as v_i = Sᵀu_i / γ_i.
    pub fn from_observation(s: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = s.shape();
        if n == 0 || m == 0 {
            return arg("empty observation matrix");
        }
        let k = n.min(m);
        let gram = s * s.transpose();
        let eig = gram.symmetric_eigen();
        let order = sorted_desc(&eig.eigenvalues);
        let mut u = DMatrix::zeros(n, n);
        let mut gammas = Vec::with_capacity(k);
        for (c, &j) in order.iter().enumerate() {
            u.set_column(c, &eig.eigenvectors.column(j));
            fix_sign(u.column_mut(c));
            if c < k {
                gammas.push(eig.eigenvalues[j].max(0.0).sqrt());
            }
        }
        let mut v = s.transpose() * u.columns(0, k);
        for (c, g) in gammas.iter().enumerate() {
            if *g > 0.0 {
                v.column_mut(c).scale_mut(1.0 / g);
            }
        }
        Ok(Self {
            u,
            v,
            gammas: SingularSpectrum::new(gammas, n, m)?,
        })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut uk = self.u.columns(0, k).into_owned();
        for (c, g) in self.gammas.gammas().iter().enumerate() {
            uk.column_mut(c).scale_mut(*g);
        }
        uk * self.v.transpose()
    }

    /// U diag(xi) Uᵀ.
    pub fn assemble_x(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        check_len(xi.len(), self.n())?;
        let mut ud = self.u.clone();
        for (c, x) in xi.iter().enumerate() {
            ud.column_mut(c).scale_mut(*x);
        }
        Ok(ud * self.u.transpose())
    }

    /// U [diag(xi) | 0] Vᵀ.
    pub fn assemble_y(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        let k = self.k();
        check_len(xi.len(), k)?;
        let mut ud = self.u.columns(0, k).into_owned();
        for (c, x) in xi.iter().enumerate() {
            ud.column_mut(c).scale_mut(*x);
        }
        Ok(ud * self.v.transpose())
    }
}

fn check_len(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(RieError::Dimension {
            expected: format!("{want} values"),
            actual: format!("{got}"),
        });
    }
    Ok(())
}

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(RieError::Dimension {
            expected: format!("{name} of shape {rows} x {cols}"),
            actual: format!("{} x {}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub raw_mse: f64,
    pub normalized_mse: f64,
    pub kappa: f64,
    pub seed: u64,
    pub estimator_name: String,
}

impl MseReport {
    fn new(raw: f64, truth_norm_sq: f64) -> Result<Self> {
        if !(truth_norm_sq > 0.0) {
            return arg("signal has zero norm");
        }
        let raw = raw.max(0.0);
        Ok(Self {
            raw_mse: raw,
            normalized_mse: raw / truth_norm_sq,
            kappa: f64::NAN,
            seed: 0,
            estimator_name: String::new(),
        })
    }

    pub fn labelled(mut self, name: &str, kappa: f64, seed: u64) -> Self {
        self.estimator_name = name.to_string();
        self.kappa = kappa;
        self.seed = seed;
        self
    }
}

/// ‖estimate - truth‖²_F / ‖truth‖²_F.
pub fn normalized_mse(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<MseReport> {
    check_shape("estimate", estimate, truth.nrows(), truth.ncols())?;
    MseReport::new((estimate - truth).norm_squared(), truth.norm_squared())
}

/// Error of a spectral estimate Σ ξ_i a_i b_iᵀ (orthonormal a_i, b_i) against
/// a truth T whose projections are ξ*_i = a_iᵀ T b_i:
/// ‖T‖² - 2Σξξ* + Σξ².
pub fn spectral_mse(xi: &[f64], oracle: &[f64], truth_norm_sq: f64) -> Result<MseReport> {
    check_len(xi.len(), oracle.len())?;
    let cross: f64 = xi.iter().zip(oracle).map(|(a, b)| a * b).sum();
    let sq: f64 = xi.iter().map(|a| a * a).sum();
    MseReport::new(truth_norm_sq - 2.0 * cross + sq, truth_norm_sq)
}

/// Per-instance projections of the truth onto the singular bases of S, with
/// everything the spectral MSE formulas need.
#[derive(Debug, Clone)]
pub struct OracleValues {
    /// u_iᵀ X u_i, N values.
    pub x: Vec<f64>,
    /// u_iᵀ Y v_i, K values.
    pub y: Vec<f64>,
    /// u_iᵀ X Y v_i, K values.
    pub xy: Vec<f64>,
    pub x_norm_sq: f64,
    pub y_norm_sq: f64,
    pub xy_norm_sq: f64,
}

impl OracleValues {
    pub fn compute(svd: &ObservationSVD, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let (n, m, k) = (svd.n(), svd.m(), svd.k());
        check_shape("X", x, n, n)?;
        check_shape("Y", y, n, m)?;
        let xu = x * &svd.u;
        let ox = (0..n).map(|i| svd.u.column(i).dot(&xu.column(i))).collect();
        let uk = svd.u.columns(0, k);
        let uty = uk.transpose() * y;
        let oy = (0..k).map(|i| uty.row(i).transpose().dot(&svd.v.column(i))).collect();
        let utxy = xu.columns(0, k).transpose() * y;
        let oxy = (0..k).map(|i| utxy.row(i).transpose().dot(&svd.v.column(i))).collect();
        Ok(Self {
            x: ox,
            y: oy,
            xy: oxy,
            x_norm_sq: x.norm_squared(),
            y_norm_sq: y.norm_squared(),
            xy_norm_sq: (x * y).norm_squared(),
        })
    }
}

fn x_estimate_from(xi: Vec<f64>) -> XEstimate {
    let n = xi.len();
    XEstimate {
        xi,
        xi2: None,
        edge_flags: vec![false; n],
        params_per_mode: vec![None; n],
        negative_clamped: 0,
        solver_failures: 0,
        max_residual: 0.0,
    }
}

fn y_estimate_from(xi: Vec<f64>) -> YEstimate {
    let k = xi.len();
    YEstimate {
        xi,
        edge_flags: vec![false; k],
        params_per_mode: vec![None; k],
        solver_failures: 0,
        max_residual: 0.0,
    }
}

/// ξ*_i = u_iᵀ X u_i.
pub fn oracle_x(svd: &ObservationSVD, x_true: &DMatrix<f64>) -> Result<XEstimate> {
    check_shape("X", x_true, svd.n(), svd.n())?;
    let xu = x_true * &svd.u;
    Ok(x_estimate_from(
        (0..svd.n()).map(|i| svd.u.column(i).dot(&xu.column(i))).collect(),
    ))
}

fn bilinear_oracle(svd: &ObservationSVD, signal: &DMatrix<f64>) -> Result<YEstimate> {
    check_shape("signal", signal, svd.n(), svd.m())?;
    let k = svd.k();
    let ut = svd.u.columns(0, k).transpose() * signal;
    Ok(y_estimate_from(
        (0..k).map(|i| ut.row(i).transpose().dot(&svd.v.column(i))).collect(),
    ))
}

/// ξ*_i = u_iᵀ Y v_i.
pub fn oracle_y(svd: &ObservationSVD, y_true: &DMatrix<f64>) -> Result<YEstimate> {
    bilinear_oracle(svd, y_true)
}

/// ξ*_i = u_iᵀ X Y v_i.
pub fn oracle_xy(svd: &ObservationSVD, x_true: &DMatrix<f64>, y_true: &DMatrix<f64>) -> Result<YEstimate> {
    check_shape("X", x_true, svd.n(), svd.n())?;
    bilinear_oracle(svd, &(x_true * y_true))
}

/// N (u_iᵀ x_j)² for eigenvectors x_j stored as columns.
pub fn empirical_overlap_x(svd: &ObservationSVD, x_eigvecs: &DMatrix<f64>, i: usize, j: usize) -> Result<f64> {
    check_shape("eigenvectors", x_eigvecs, svd.n(), svd.n())?;
    let d = svd.u.column(i).dot(&x_eigvecs.column(j));
    Ok(svd.n() as f64 * d * d)
}

/// N (u_iᵀ y_j^l)(v_iᵀ y_j^r) for singular pairs of Y stored as columns.
pub fn empirical_overlap_y(
    svd: &ObservationSVD,
    y_left: &DMatrix<f64>,
    y_right: &DMatrix<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    if y_left.nrows() != svd.n() || y_right.nrows() != svd.m() || i >= svd.k() {
        return Err(RieError::Dimension {
            expected: format!("left vectors of length {}, right of length {}", svd.n(), svd.m()),
            actual: format!("{} and {}", y_left.nrows(), y_right.nrows()),
        });
    }
    let a = svd.u.column(i).dot(&y_left.column(j));
    let b = svd.v.column(i).dot(&y_right.column(j));
    Ok(svd.n() as f64 * a * b)
}

/// Blocks of (zI - [[0, S], [Sᵀ, 0]])⁻¹ from G = (z²I - SᵀS)⁻¹:
/// upper-left (1/z)(I + S G Sᵀ), upper-right S G, lower-left G Sᵀ,
/// lower-right z G.
pub struct HermitizedResolvent {
    pub upper_left: DMatrix<C64>,
    pub upper_right: DMatrix<C64>,
    pub lower_left: DMatrix<C64>,
    pub lower_right: DMatrix<C64>,
}

pub fn hermitize_resolvent(s: &DMatrix<f64>, z: C64) -> Result<HermitizedResolvent> {
    if z.im == 0.0 {
        return arg("resolvent needs a point off the real axis");
    }
    let (n, m) = s.shape();
    let sc = s.map(|v| C64::new(v, 0.0));
    let sts = sc.transpose() * &sc;
    let shifted = DMatrix::<C64>::identity(m, m) * (z * z) - sts;
    let g = shifted.lu().try_inverse().ok_or_else(|| RieError::Solver {
        what: "resolvent inverse",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let sg = &sc * &g;
    let upper_left = (DMatrix::<C64>::identity(n, n) + &sg * sc.transpose()) / z;
    Ok(HermitizedResolvent {
        upper_left,
        lower_left: &g * sc.transpose(),
        upper_right: sg,
        lower_right: g * z,
    })
}

/// Nonzero eigenvalues xᵀy ± ‖x‖‖y‖ of x yᵀ + y xᵀ.
pub fn rank_two_eigs(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_len(y.len(), x.len())?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok((dot + nx * ny, dot - nx * ny))
}

/// Singular values of S in nonincreasing order, from the eigenvalues of S Sᵀ
/// or SᵀS, whichever is smaller.
pub fn singular_values(s: &DMatrix<f64>) -> Vec<f64> {
    let gram = if s.nrows() <= s.ncols() {
        s * s.transpose()
    } else {
        s.transpose() * s
    };
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Left singular vector of S for the singular value `gamma`, by inverse
/// iteration on S Sᵀ - γ²I. Signs follow the `ObservationSVD` convention.
pub fn left_singular_vector(s: &DMatrix<f64>, gamma: f64, gap: f64) -> Result<DVector<f64>> {
    gram_eigenvector(&(s * s.transpose()), gamma * gamma, gap)
}

/// Unit eigenvector of the symmetric matrix `gram` for the eigenvalue
/// `lambda`, by inverse iteration. `gap` is the distance to the nearest
/// other eigenvalue and sets the shift offset.
pub fn gram_eigenvector(gram: &DMatrix<f64>, lambda: f64, gap: f64) -> Result<DVector<f64>> {
    let n = gram.nrows();
    if n == 0 || gram.ncols() != n {
        return Err(RieError::Dimension {
            expected: "a nonempty square matrix".into(),
            actual: format!("{} x {}", gram.nrows(), gram.ncols()),
        });
    }
    let shift = lambda + gap.max(1e-12) * 1e-3;
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    x.normalize_mut();
    for _ in 0..8 {
        let mut y = lu.solve(&x).ok_or_else(|| RieError::Solver {
            what: "inverse iteration",
            iterations: 0,
            residual: f64::NAN,
        })?;
        y.normalize_mut();
        let change = (&y - &x).norm().min((&y + &x).norm());
        x = y;
        if change < 1e-13 {
            break;
        }
    }
    fix_sign(x.column_mut(0));
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -0.3, 0.7, 1.1])
    }

    #[test]
    fn svd_reconstructs_both_shapes() {
        for s in [small(), small().transpose()] {
            let svd = ObservationSVD::from_observation(&s).unwrap();
            assert!((svd.reconstruct() - &s).amax() < 1e-12);
            let e = svd.u.transpose() * &svd.u - DMatrix::identity(svd.n(), svd.n());
            assert!(e.amax() < 1e-12);
        }
    }

    #[test]
    fn mse_trivial_cases() {
        let t = small();
        assert_eq!(normalized_mse(&t, &t).unwrap().normalized_mse, 0.0);
        assert_eq!(normalized_mse(&(&t * 0.0), &t).unwrap().normalized_mse, 1.0);
        assert!((normalized_mse(&(&t * 2.0), &t).unwrap().normalized_mse - 1.0).abs() < 1e-15);
        assert!(normalized_mse(&t, &(&t * 0.0)).is_err());
    }

    #[test]
    fn rank_two_cases() {
        let (a, b) = rank_two_eigs(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!((a, b), (2.0, 0.0));
        let (a, b) = rank_two_eigs(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((a, b), (1.0, -1.0));
    }

    #[test]
    fn hermitization_toy_matches_direct_inverse() {
        let s = small();
        let z = C64::new(0.4, -0.3);
        let r = hermitize_resolvent(&s, z).unwrap();
        let mut h = DMatrix::<C64>::zeros(5, 5);
        for i in 0..2 {
            for j in 0..3 {
                h[(i, 2 + j)] = C64::new(s[(i, j)], 0.0);
                h[(2 + j, i)] = C64::new(s[(i, j)], 0.0);
            }
        }
        let direct = (DMatrix::<C64>::identity(5, 5) * z - h).try_inverse().unwrap();
        let mut blocks = DMatrix::<C64>::zeros(5, 5);
        blocks.view_mut((0, 0), (2, 2)).copy_from(&r.upper_left);
        blocks.view_mut((0, 2), (2, 3)).copy_from(&r.upper_right);
        blocks.view_mut((2, 0), (3, 2)).copy_from(&r.lower_left);
        blocks.view_mut((2, 2), (3, 3)).copy_from(&r.lower_right);
        assert!((direct - blocks).map(|c| c.norm()).max() < 1e-13);
    }
}
