//! Random factor and noise ensembles, and synthesis of S = √κ·X·Y + W.
//!
//! Every matrix is drawn from its own ChaCha20 stream. The 256-bit key packs
//! (seed, κ bits, N, M) so distinct cells never share randomness, and the
//! stream id selects the matrix (X, Y, W or auxiliary draws).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{arg, Result, RieError};
use crate::transforms::MeasureModel;

#[derive(Debug, Clone, PartialEq)]
pub enum XPrior {
    /// F + cI with F a Wigner matrix.
    ShiftedWigner { c: f64 },
    /// H Hᵀ, H of size N x N/aspect with entry variance 1/N.
    Wishart { aspect: f64 },
    /// Positive square root of the Wishart matrix above.
    SqrtWishart { aspect: f64 },
    /// U diag(b) Uᵀ with Haar U and b_i ∈ {0, 1}, P(b_i = 0) = p.
    BernoulliSpectralHaar { p: f64 },
    WignerSym,
}

#[derive(Debug, Clone, PartialEq)]
pub enum YPrior {
    GaussianIid,
    /// U Σ Vᵀ with Haar U, V and singular values drawn i.i.d. from the law.
    HaarWithSingulars(MeasureModel),
    /// Entries ±1/√N with probability (1 - p)/2 each, zero with probability p.
    BernoulliRademacher { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WPrior {
    GaussianIid,
}

impl XPrior {
    /// Eigenvalue law ρ_X, when it has a closed form.
    pub fn spectral_law(&self) -> Option<MeasureModel> {
        match self {
            XPrior::ShiftedWigner { c } => Some(MeasureModel::ShiftedWignerEig { c: *c }),
            XPrior::Wishart { aspect } => Some(MeasureModel::MarchenkoPasturEig { aspect: *aspect }),
            XPrior::BernoulliSpectralHaar { p } => Some(MeasureModel::BernoulliSpectral { p: *p }),
            XPrior::WignerSym => Some(MeasureModel::SemicircleEig),
            XPrior::SqrtWishart { .. } => None,
        }
    }

    /// Law of the eigenvalues of X².
    pub fn squared_law(&self) -> MeasureModel {
        match self {
            XPrior::SqrtWishart { aspect } => MeasureModel::MarchenkoPasturEig { aspect: *aspect },
            other => MeasureModel::squared(other.spectral_law().expect("closed-form law")),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            XPrior::Wishart { aspect } | XPrior::SqrtWishart { aspect } if !(*aspect > 0.0 && *aspect <= 1.0) => {
                arg(format!("Wishart aspect {aspect} not in (0, 1]"))
            }
            XPrior::BernoulliSpectralHaar { p } if !(*p > 0.0 && *p < 1.0) => arg(format!("p={p} not in (0, 1)")),
            XPrior::ShiftedWigner { c } if !c.is_finite() => arg("shift must be finite"),
            _ => Ok(()),
        }
    }
}

impl YPrior {
    /// Singular-value law μ_Y for an N x M factor.
    pub fn singular_law(&self, n: usize, m: usize) -> MeasureModel {
        let alpha = n as f64 / m as f64;
        match self {
            YPrior::GaussianIid => MeasureModel::GaussianIidSingular { aspect: alpha },
            YPrior::HaarWithSingulars(law) => law.clone(),
            // same limiting singular law as a Gaussian matrix of equal entry variance
            YPrior::BernoulliRademacher { p } => MeasureModel::Scaled {
                base: Box::new(MeasureModel::GaussianIidSingular { aspect: alpha }),
                factor: (1.0 - p).sqrt(),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            YPrior::HaarWithSingulars(law) => law.validate(),
            YPrior::BernoulliRademacher { p } if !(*p >= 0.0 && *p < 1.0) => arg(format!("p={p} not in [0, 1)")),
            _ => Ok(()),
        }
    }
}

impl WPrior {
    pub fn singular_law(&self, n: usize, m: usize) -> MeasureModel {
        MeasureModel::GaussianIidSingular {
            aspect: n as f64 / m as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub x_prior: XPrior,
    pub y_prior: YPrior,
    pub w_prior: WPrior,
    pub n: usize,
    pub m: usize,
    pub kappa: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return arg("N and M must be positive");
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return arg(format!("kappa must be finite and nonnegative, got {}", self.kappa));
        }
        self.x_prior.validate()?;
        self.y_prior.validate()
    }

    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.m as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    X = 1,
    Y = 2,
    W = 3,
    Aux = 4,
}

/// Generator for one matrix of one cell.
pub fn stream_rng(seed: u64, kappa: f64, n: usize, m: usize, stream: Stream) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&kappa.to_bits().to_le_bytes());
    key[16..24].copy_from_slice(&(n as u64).to_le_bytes());
    key[24..32].copy_from_slice(&(m as u64).to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(stream as u64);
    rng
}

fn gaussian<R: Rng>(rows: usize, cols: usize, sd: f64, rng: &mut R) -> DMatrix<f64> {
    // filled row by row so the draw order does not depend on storage layout
    let mut a = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let v: f64 = rng.sample(StandardNormal);
            a[(i, j)] = sd * v;
        }
    }
    a
}

/// First `cols` columns of a Haar-distributed orthogonal matrix of size
/// `rows`: QR of a Gaussian matrix with the signs of diag(R) moved into Q.
pub fn haar_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(cols <= rows && cols > 0);
    let g = gaussian(rows, cols, 1.0, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_orthogonal(dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    if dim == 0 {
        return arg("dimension must be at least 1");
    }
    let mut rng = stream_rng(seed, 0.0, dim, dim, Stream::Aux);
    Ok(haar_columns(dim, dim, &mut rng))
}

fn wigner<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let a = gaussian(n, n, 1.0 / (2.0 * n as f64).sqrt(), rng);
    &a + a.transpose()
}

fn wishart<R: Rng>(n: usize, aspect: f64, rng: &mut R) -> DMatrix<f64> {
    let cols = ((n as f64) / aspect).round().max(1.0) as usize;
    let h = gaussian(n, cols, 1.0 / (n as f64).sqrt(), rng);
    &h * h.transpose()
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn sample_x(spec: &EnsembleSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = stream_rng(seed, spec.kappa, spec.n, spec.m, Stream::X);
    let mut x = match &spec.x_prior {
        XPrior::WignerSym => wigner(n, &mut rng),
        XPrior::ShiftedWigner { c } => {
            let mut f = wigner(n, &mut rng);
            for i in 0..n {
                f[(i, i)] += c;
            }
            f
        }
        XPrior::Wishart { aspect } => wishart(n, *aspect, &mut rng),
        XPrior::SqrtWishart { aspect } => {
            let eig = wishart(n, *aspect, &mut rng).symmetric_eigen();
            let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            let v = &eig.eigenvectors;
            v * DMatrix::from_diagonal(&d) * v.transpose()
        }
        XPrior::BernoulliSpectralHaar { p } => {
            let u = haar_columns(n, n, &mut rng);
            let mut ud = u.clone();
            for j in 0..n {
                if rng.random::<f64>() < *p {
                    ud.column_mut(j).fill(0.0);
                }
            }
            ud * u.transpose()
        }
    };
    symmetrize(&mut x);
    Ok(x)
}

pub fn sample_y(spec: &EnsembleSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m);
    let mut rng = stream_rng(seed, spec.kappa, n, m, Stream::Y);
    Ok(match &spec.y_prior {
        YPrior::GaussianIid => gaussian(n, m, 1.0 / (n as f64).sqrt(), &mut rng),
        YPrior::BernoulliRademacher { p } => {
            let v = 1.0 / (n as f64).sqrt();
            let mut y = DMatrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    let r: f64 = rng.random();
                    if r >= *p {
                        y[(i, j)] = if rng.random::<bool>() { v } else { -v };
                    }
                }
            }
            y
        }
        YPrior::HaarWithSingulars(law) => {
            let k = n.min(m);
            let sigma = (0..k).map(|_| law.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
            let mut u = haar_columns(n, k, &mut rng);
            let v = haar_columns(m, k, &mut rng);
            for (j, s) in sigma.iter().enumerate() {
                u.column_mut(j).scale_mut(*s);
            }
            u * v.transpose()
        }
    })
}

pub fn sample_w(spec: &EnsembleSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = stream_rng(seed, spec.kappa, spec.n, spec.m, Stream::W);
    match spec.w_prior {
        WPrior::GaussianIid => Ok(gaussian(spec.n, spec.m, 1.0 / (spec.n as f64).sqrt(), &mut rng)),
    }
}

#[derive(Debug, Clone)]
pub struct ObservationInstance {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub spec: EnsembleSpec,
}

/// √κ·X·Y + W.
pub fn observe(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, kappa: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != x.ncols() || x.ncols() != y.nrows() || y.shape() != w.shape() {
        return Err(RieError::Dimension {
            expected: "X: N x N, Y and W: N x M".into(),
            actual: format!("X {:?}, Y {:?}, W {:?}", x.shape(), y.shape(), w.shape()),
        });
    }
    if kappa == 0.0 {
        return Ok(w.clone());
    }
    let mut s = w.clone();
    s.gemm(kappa.sqrt(), x, y, 1.0);
    Ok(s)
}

pub fn synthesize(spec: &EnsembleSpec) -> Result<ObservationInstance> {
    let x = sample_x(spec, spec.seed)?;
    let y = sample_y(spec, spec.seed)?;
    let w = sample_w(spec, spec.seed)?;
    let s = observe(&x, &y, &w, spec.kappa)?;
    Ok(ObservationInstance {
        x,
        y,
        w,
        s,
        spec: spec.clone(),
    })
}

const DUMP_MAGIC: &[u8; 8] = b"RIEMATS1";

/// Writes matrices as: magic, u64 count, then per matrix u64 rows, u64 cols
/// and rows·cols little-endian f64 in row-major order.
pub fn write_matrices(path: &Path, mats: &[&DMatrix<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(mats.len() as u64).to_le_bytes())?;
    for m in mats {
        out.write_all(&(m.nrows() as u64).to_le_bytes())?;
        out.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.write_all(&m[(i, j)].to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrices(path: &Path) -> Result<Vec<DMatrix<f64>>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |msg: &str| RieError::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: msg.to_string(),
    };
    let mut pos = 0usize;
    let mut take = |len: usize| -> Result<&[u8]> {
        let end = pos.checked_add(len).filter(|e| *e <= buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &buf[pos..end];
        pos = end;
        Ok(s)
    };
    if take(8)? != DUMP_MAGIC {
        return Err(bad("not a matrix dump"));
    }
    let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let count = u64_at(take(8)?) as usize;
    let mut mats = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = u64_at(take(8)?) as usize;
        let cols = u64_at(take(8)?) as usize;
        let data = take(rows.checked_mul(cols).and_then(|v| v.checked_mul(8)).ok_or_else(|| bad("bad dims"))?)?;
        let vals: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        mats.push(DMatrix::from_row_slice(rows, cols, &vals));
    }
    Ok(mats)
}

impl ObservationInstance {
    pub fn dump(&self, path: &Path) -> Result<()> {
        write_matrices(path, &[&self.x, &self.y, &self.w, &self.s])
    }
}
