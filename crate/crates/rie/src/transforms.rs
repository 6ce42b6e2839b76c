//! Probability laws used as priors together with their Stieltjes,
//! Hilbert, R- and rectangular R-transforms.
//!
//! Eigenvalue laws (semicircle, Marchenko-Pastur, ...) are handled as plain
//! measures on the real line. Singular-value laws (`GaussianIidSingular`,
//! `UniformSingular` and rescalings of them) are measures on [0, inf); for
//! those `stieltjes` returns the transform of the symmetrized law
//! (mu(t) + mu(-t)) / 2, which is the object every estimator consumes.

use std::f64::consts::PI;

use crate::error::{arg, Result, RieError};
use crate::roots::{newton, NewtonOptions};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureModel {
    /// Semicircle on [-2, 2] (Wigner matrix with entry variance 1/N).
    SemicircleEig,
    /// Semicircle shifted by `c`, the law of F + cI.
    ShiftedWignerEig { c: f64 },
    /// Law of H Hᵀ with H of size N x N/aspect and entry variance 1/N;
    /// mean 1/aspect, support [(1/√a - 1)², (1/√a + 1)²].
    MarchenkoPasturEig { aspect: f64 },
    /// Push-forward of the base law under x -> x².
    SquaredMeasureOf(Box<MeasureModel>),
    /// p δ₀ + (1 - p) δ₁.
    BernoulliSpectral { p: f64 },
    /// δ_at; `PointMass { at: 1.0 }` is the spectrum of the identity.
    PointMass { at: f64 },
    /// Non-trivial singular values of an N x M matrix with i.i.d. entries of
    /// variance 1/N, `aspect` = N/M.
    GaussianIidSingular { aspect: f64 },
    /// Singular values drawn uniformly on [a, b].
    UniformSingular { a: f64, b: f64 },
    /// Push-forward of the base law under x -> factor·x (factor > 0).
    Scaled { base: Box<MeasureModel>, factor: f64 },
    /// Sorted sample; transforms are plain kernel averages.
    EmpiricalSamples(Vec<f64>),
}

fn csqrt(z: C64) -> C64 {
    z.sqrt()
}

/// (z - √(z-2)√(z+2)) / 2 with the branch cut on [-2, 2].
fn semicircle_g(z: C64) -> C64 {
    (z - csqrt(z - 2.0) * csqrt(z + 2.0)) * 0.5
}

fn mp_edges(aspect: f64) -> (f64, f64) {
    let r = 1.0 / aspect.sqrt();
    ((r - 1.0).powi(2), (r + 1.0).powi(2))
}

impl MeasureModel {
    pub fn shifted_wigner(c: f64) -> Self {
        MeasureModel::ShiftedWignerEig { c }
    }

    pub fn marchenko_pastur(aspect: f64) -> Result<Self> {
        let m = MeasureModel::MarchenkoPasturEig { aspect };
        m.validate()?;
        Ok(m)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        let m = MeasureModel::BernoulliSpectral { p };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian_singular(aspect: f64) -> Result<Self> {
        let m = MeasureModel::GaussianIidSingular { aspect };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform_singular(a: f64, b: f64) -> Result<Self> {
        let m = MeasureModel::UniformSingular { a, b };
        m.validate()?;
        Ok(m)
    }

    pub fn squared(base: MeasureModel) -> Self {
        MeasureModel::SquaredMeasureOf(Box::new(base))
    }

    pub fn scaled(base: MeasureModel, factor: f64) -> Result<Self> {
        let m = MeasureModel::Scaled {
            base: Box::new(base),
            factor,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return arg("empirical samples must be a nonempty list of finite values");
        }
        values.sort_by(f64::total_cmp);
        Ok(MeasureModel::EmpiricalSamples(values))
    }

    pub fn validate(&self) -> Result<()> {
        use MeasureModel::*;
        match self {
            SemicircleEig | PointMass { .. } => Ok(()),
            ShiftedWignerEig { c } if c.is_finite() => Ok(()),
            ShiftedWignerEig { .. } => arg("shift must be finite"),
            MarchenkoPasturEig { aspect } if *aspect > 0.0 && *aspect <= 1.0 => Ok(()),
            MarchenkoPasturEig { aspect } => arg(format!("MP aspect {aspect} not in (0, 1]")),
            SquaredMeasureOf(b) => b.validate(),
            BernoulliSpectral { p } if *p > 0.0 && *p < 1.0 => Ok(()),
            BernoulliSpectral { p } => arg(format!("Bernoulli p={p} not in (0, 1)")),
            GaussianIidSingular { aspect } if *aspect > 0.0 && aspect.is_finite() => Ok(()),
            GaussianIidSingular { aspect } => arg(format!("aspect {aspect} must be positive")),
            UniformSingular { a, b } if *a >= 0.0 && a < b => Ok(()),
            UniformSingular { a, b } => arg(format!("uniform law needs 0 <= a < b, got [{a}, {b}]")),
            Scaled { base, factor } if *factor > 0.0 && factor.is_finite() => base.validate(),
            Scaled { factor, .. } => arg(format!("scale factor {factor} must be positive")),
            EmpiricalSamples(v) if !v.is_empty() => Ok(()),
            EmpiricalSamples(_) => arg("empty sample"),
        }
    }

    /// True for laws of singular values, whose Stieltjes transform is taken
    /// over the symmetrized law.
    pub fn is_singular_law(&self) -> bool {
        match self {
            MeasureModel::GaussianIidSingular { .. } | MeasureModel::UniformSingular { .. } => true,
            MeasureModel::Scaled { base, .. } => base.is_singular_law(),
            _ => false,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        use MeasureModel::*;
        match self {
            SemicircleEig => true,
            ShiftedWignerEig { c } => *c == 0.0,
            PointMass { at } => *at == 0.0,
            Scaled { base, .. } => base.is_symmetric(),
            EmpiricalSamples(v) => {
                let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
                v.iter()
                    .zip(v.iter().rev())
                    .all(|(a, b)| (a + b).abs() <= 1e-12 * scale)
            }
            _ => false,
        }
    }

    /// Support of the law (of the singular values themselves for singular laws).
    pub fn support(&self) -> (f64, f64) {
        use MeasureModel::*;
        match self {
            SemicircleEig => (-2.0, 2.0),
            ShiftedWignerEig { c } => (c - 2.0, c + 2.0),
            MarchenkoPasturEig { aspect } => mp_edges(*aspect),
            SquaredMeasureOf(b) => {
                let (lo, hi) = b.support();
                let lo = if b.is_singular_law() { lo.max(0.0) } else { lo };
                if lo >= 0.0 {
                    (lo * lo, hi * hi)
                } else if hi <= 0.0 {
                    (hi * hi, lo * lo)
                } else {
                    (0.0, (lo * lo).max(hi * hi))
                }
            }
            BernoulliSpectral { .. } => (0.0, 1.0),
            PointMass { at } => (*at, *at),
            GaussianIidSingular { aspect } => {
                let (lo, hi) = self.gaussian_squared_law(*aspect).support();
                (lo.max(0.0).sqrt(), hi.sqrt())
            }
            UniformSingular { a, b } => (*a, *b),
            Scaled { base, factor } => {
                let (lo, hi) = base.support();
                (lo * factor, hi * factor)
            }
            EmpiricalSamples(v) => (v[0], v[v.len() - 1]),
        }
    }

    /// Law of the squared singular values of the Gaussian ensemble.
    fn gaussian_squared_law(&self, aspect: f64) -> MeasureModel {
        if aspect <= 1.0 {
            MeasureModel::MarchenkoPasturEig { aspect }
        } else {
            MeasureModel::Scaled {
                base: Box::new(MeasureModel::MarchenkoPasturEig {
                    aspect: 1.0 / aspect,
                }),
                factor: 1.0 / aspect,
            }
        }
    }

    /// Mean of the measure seen by `stieltjes` (zero for symmetrized laws).
    pub fn mean(&self) -> f64 {
        use MeasureModel::*;
        match self {
            SemicircleEig => 0.0,
            ShiftedWignerEig { c } => *c,
            MarchenkoPasturEig { aspect } => 1.0 / aspect,
            SquaredMeasureOf(b) => b.second_moment(),
            BernoulliSpectral { p } => 1.0 - p,
            PointMass { at } => *at,
            GaussianIidSingular { .. } | UniformSingular { .. } => 0.0,
            Scaled { base, factor } => base.mean() * factor,
            EmpiricalSamples(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    /// Second moment of the law (of the singular values for singular laws).
    pub fn second_moment(&self) -> f64 {
        use MeasureModel::*;
        match self {
            SemicircleEig => 1.0,
            ShiftedWignerEig { c } => 1.0 + c * c,
            MarchenkoPasturEig { aspect } => (1.0 + aspect) / (aspect * aspect),
            SquaredMeasureOf(b) => b.fourth_moment(),
            BernoulliSpectral { p } => 1.0 - p,
            PointMass { at } => at * at,
            GaussianIidSingular { aspect } => self.gaussian_squared_law(*aspect).mean(),
            UniformSingular { a, b } => (b.powi(3) - a.powi(3)) / (3.0 * (b - a)),
            Scaled { base, factor } => base.second_moment() * factor * factor,
            EmpiricalSamples(v) => v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64,
        }
    }

    fn fourth_moment(&self) -> f64 {
        use MeasureModel::*;
        match self {
            SemicircleEig => 2.0,
            ShiftedWignerEig { c } => c.powi(4) + 6.0 * c * c + 2.0,
            PointMass { at } => at.powi(4),
            BernoulliSpectral { p } => 1.0 - p,
            GaussianIidSingular { aspect } => self.gaussian_squared_law(*aspect).second_moment(),
            UniformSingular { a, b } => (b.powi(5) - a.powi(5)) / (5.0 * (b - a)),
            Scaled { base, factor } => base.fourth_moment() * factor.powi(4),
            EmpiricalSamples(v) => v.iter().map(|x| x.powi(4)).sum::<f64>() / v.len() as f64,
            MarchenkoPasturEig { aspect } => {
                // free cumulants of this law are all 1/aspect
                let k = 1.0 / aspect;
                k.powi(4) + 6.0 * k.powi(3) + 6.0 * k * k + k
            }
            SquaredMeasureOf(_) => f64::NAN,
        }
    }

    /// Density of the law at x (of the singular values for singular laws).
    /// Purely atomic laws return 0.
    pub fn density(&self, x: f64) -> f64 {
        use MeasureModel::*;
        match self {
            SemicircleEig => {
                if x.abs() < 2.0 {
                    (4.0 - x * x).sqrt() / (2.0 * PI)
                } else {
                    0.0
                }
            }
            ShiftedWignerEig { c } => MeasureModel::SemicircleEig.density(x - c),
            MarchenkoPasturEig { aspect } => {
                let (a, b) = mp_edges(*aspect);
                if x > a && x < b && x > 0.0 {
                    ((x - a) * (b - x)).sqrt() / (2.0 * PI * x)
                } else {
                    0.0
                }
            }
            SquaredMeasureOf(b) => {
                if x <= 0.0 {
                    return 0.0;
                }
                let r = x.sqrt();
                (b.density(r) + b.density(-r)) / (2.0 * r)
            }
            GaussianIidSingular { aspect } => {
                if x <= 0.0 {
                    return 0.0;
                }
                2.0 * x * self.gaussian_squared_law(*aspect).density(x * x)
            }
            UniformSingular { a, b } => {
                if x >= *a && x <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Scaled { base, factor } => base.density(x / factor) / factor,
            BernoulliSpectral { .. } | PointMass { .. } | EmpiricalSamples(_) => 0.0,
        }
    }

    fn on_support(&self, z: C64) -> bool {
        if z.im != 0.0 {
            return false;
        }
        let x = z.re;
        match self {
            MeasureModel::BernoulliSpectral { .. } => x == 0.0 || x == 1.0,
            MeasureModel::PointMass { at } => x == *at,
            MeasureModel::EmpiricalSamples(v) => v.binary_search_by(|p| p.total_cmp(&x)).is_ok(),
            _ => {
                let (lo, hi) = self.support();
                if self.is_singular_law() {
                    x.abs() >= lo && x.abs() <= hi
                } else {
                    x >= lo && x <= hi
                }
            }
        }
    }

    /// Stieltjes transform 𝒢(z) = ∫ ρ(x) / (z - x) dx.
    pub fn stieltjes(&self, z: C64) -> Result<C64> {
        if !z.is_finite() {
            return arg("non-finite evaluation point");
        }
        if self.on_support(z) {
            return Err(RieError::Domain { re: z.re, im: z.im });
        }
        use MeasureModel::*;
        let g = match self {
            SemicircleEig => semicircle_g(z),
            ShiftedWignerEig { c } => semicircle_g(z - c),
            MarchenkoPasturEig { aspect } => {
                if z.norm() == 0.0 {
                    return Err(RieError::Domain { re: 0.0, im: 0.0 });
                }
                let (a, b) = mp_edges(*aspect);
                (z - (1.0 / aspect - 1.0) - csqrt(z - a) * csqrt(z - b)) / (2.0 * z)
            }
            SquaredMeasureOf(b) => {
                if z.norm() == 0.0 {
                    return Err(RieError::Domain { re: 0.0, im: 0.0 });
                }
                let r = csqrt(z);
                (b.stieltjes(r)? - b.stieltjes(-r)?) / (2.0 * r)
            }
            BernoulliSpectral { p } => *p / z + (1.0 - p) / (z - 1.0),
            PointMass { at } => 1.0 / (z - at),
            GaussianIidSingular { aspect } => {
                z * self.gaussian_squared_law(*aspect).stieltjes(z * z)?
            }
            UniformSingular { a, b } => {
                let num = (z - a).ln() - (z - b).ln() + (z + b).ln() - (z + a).ln();
                num / (2.0 * (b - a))
            }
            Scaled { base, factor } => base.stieltjes(z / factor)? / factor,
            EmpiricalSamples(v) => {
                v.iter().map(|x| 1.0 / (z - x)).sum::<C64>() / v.len() as f64
            }
        };
        Ok(g)
    }

    /// (Re 𝒢(x - iη)/π, Im 𝒢(x - iη)/π), i.e. (Hilbert transform, density)
    /// smoothed at scale η.
    pub fn plemelj_split(&self, x: f64, eta: f64) -> Result<(f64, f64)> {
        if !(eta > 0.0) {
            return arg(format!("eta must be positive, got {eta}"));
        }
        let g = self.stieltjes(C64::new(x, -eta))?;
        Ok((g.re / PI, g.im / PI))
    }

    /// R-transform ℛ(w) = 𝒢⁻¹(w) - 1/w, in closed form where available.
    pub fn r_transform(&self, w: C64) -> Result<C64> {
        use MeasureModel::*;
        match self {
            SemicircleEig => Ok(w),
            ShiftedWignerEig { c } => Ok(w + c),
            MarchenkoPasturEig { aspect } => Ok((1.0 / aspect) / (1.0 - w)),
            PointMass { at } => Ok(C64::new(*at, 0.0)),
            SquaredMeasureOf(b) if matches!(**b, SemicircleEig | ShiftedWignerEig { c: 0.0 }) => {
                Ok(1.0 / (1.0 - w))
            }
            Scaled { base, factor } => Ok(base.r_transform(w * factor)? * factor),
            _ => self.r_transform_numeric(w),
        }
    }

    /// R-transform through Newton inversion of 𝒢, started from 1/w + mean.
    pub fn r_transform_numeric(&self, w: C64) -> Result<C64> {
        if w.norm() == 0.0 {
            return Ok(C64::new(self.mean(), 0.0));
        }
        let z0 = 1.0 / w + self.mean();
        let root = newton(
            "Stieltjes inversion",
            |z| Ok(self.stieltjes(z)? - w),
            z0,
            NewtonOptions::default(),
        )?;
        Ok(root.z - 1.0 / w)
    }

    /// M_μ(u) = ∫ t²u / (1 - t²u) dμ(t) for a singular-value law.
    fn m_transform(&self, u: C64) -> Result<C64> {
        use MeasureModel::*;
        match self {
            EmpiricalSamples(v) => Ok(v
                .iter()
                .map(|t| {
                    let x = u * t * t;
                    x / (1.0 - x)
                })
                .sum::<C64>()
                / v.len() as f64),
            UniformSingular { a, b } => {
                let (a, b) = (*a, *b);
                if u.norm() * b * b < 0.25 {
                    // power series in u with the even moments of the law
                    let mut sum = C64::new(0.0, 0.0);
                    let mut uk = u;
                    for k in 1..=80 {
                        let p = 2 * k as i32 + 1;
                        let m2k = (b.powi(p) - a.powi(p)) / (p as f64 * (b - a));
                        let term = uk * m2k;
                        sum += term;
                        if term.norm() < 1e-18 * sum.norm() {
                            break;
                        }
                        uk *= u;
                    }
                    Ok(sum)
                } else {
                    let r = csqrt(u);
                    Ok(((r * b).atanh() - (r * a).atanh()) / (r * (b - a)) - 1.0)
                }
            }
            PointMass { at } => {
                let x = u * at * at;
                Ok(x / (1.0 - x))
            }
            BernoulliSpectral { p } => Ok(u * (1.0 - p) / (1.0 - u)),
            Scaled { base, factor } => base.m_transform(u * factor * factor),
            _ if self.is_singular_law() => {
                if u.norm() == 0.0 {
                    return Ok(C64::new(0.0, 0.0));
                }
                let r = csqrt(u);
                Ok(self.stieltjes(1.0 / r)? / r - 1.0)
            }
            _ => arg("rectangular R-transform needs a singular-value law"),
        }
    }

    /// Draws one value from the law; available for the laws used as
    /// singular-value priors.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        use MeasureModel::*;
        match self {
            UniformSingular { a, b } => Ok(a + (b - a) * rng.random::<f64>()),
            BernoulliSpectral { p } => Ok(if rng.random::<f64>() < *p { 0.0 } else { 1.0 }),
            PointMass { at } => Ok(*at),
            EmpiricalSamples(v) => Ok(v[rng.random_range(0..v.len())]),
            Scaled { base, factor } => Ok(base.sample(rng)? * factor),
            _ => arg(format!("no direct sampler for {self:?}")),
        }
    }

    /// Rectangular R-transform 𝒞^{(α)}(z) = T⁻¹(z / H⁻¹(z)).
    pub fn rect_c_transform(&self, aspect: f64, z: C64) -> Result<C64> {
        if !(aspect > 0.0 && aspect <= 1.0) {
            return arg(format!("rectangular aspect {aspect} not in (0, 1]"));
        }
        if z.norm() == 0.0 {
            return Ok(z);
        }
        match self {
            MeasureModel::GaussianIidSingular { aspect: g } => {
                let short = g.min(1.0 / g);
                if (aspect - short).abs() < 1e-12 {
                    let s2 = if *g <= 1.0 { 1.0 } else { 1.0 / g };
                    return Ok(z * s2 / short);
                }
                self.rect_c_transform_numeric(aspect, z)
            }
            MeasureModel::Scaled { base, factor } if base.is_singular_law() => {
                base.rect_c_transform(aspect, z * factor * factor)
            }
            _ => self.rect_c_transform_numeric(aspect, z),
        }
    }

    /// The w with 𝒞(w) = c. Since 𝒞(w) = c forces M(u) = c at u = H⁻¹(w),
    /// this only inverts M and gives w = u·T(c), which stays on the physical
    /// sheet where inverting H would not (H has a finite limit as u → -∞).
    pub fn rect_c_inverse(&self, aspect: f64, c: C64) -> Result<C64> {
        Ok(self.rect_c_inverse_with_residual(aspect, c)?.0)
    }

    /// `rect_c_inverse` together with the residual |M(u) - c| of the inner solve.
    pub fn rect_c_inverse_with_residual(&self, aspect: f64, c: C64) -> Result<(C64, f64)> {
        if !(aspect > 0.0 && aspect <= 1.0) {
            return arg(format!("rectangular aspect {aspect} not in (0, 1]"));
        }
        if c.norm() == 0.0 {
            return Ok((c, 0.0));
        }
        match self {
            MeasureModel::GaussianIidSingular { aspect: g } if (aspect - g.min(1.0 / g)).abs() < 1e-12 => {
                let s2 = if *g <= 1.0 { 1.0 } else { 1.0 / g };
                return Ok((c * g.min(1.0 / g) / s2, 0.0));
            }
            MeasureModel::Scaled { base, factor } if base.is_singular_law() => {
                let (w, r) = base.rect_c_inverse_with_residual(aspect, c)?;
                return Ok((w / (factor * factor), r));
            }
            _ => {}
        }
        let m1 = self.second_moment();
        let solve = |target: C64, u0: C64| {
            newton("M-transform inversion", |u| Ok(self.m_transform(u)? - target), u0, NewtonOptions::default())
        };
        let root = match solve(c, c / (m1 + c * self.fourth_moment() / m1)) {
            Ok(r) => r,
            Err(_) => {
                // continue from the origin, where M(u) ≈ m₁u
                let steps = 32;
                let mut u = c / (m1 * steps as f64);
                for k in 1..steps {
                    u = solve(c * (k as f64 / steps as f64), u)?.z;
                }
                solve(c, u)?
            }
        };
        Ok((root.z * (aspect * c + 1.0) * (c + 1.0), root.residual))
    }

    /// Rectangular R-transform through numerical inversion of H, bypassing
    /// any closed form.
    pub fn rect_c_transform_numeric(&self, aspect: f64, z: C64) -> Result<C64> {
        if z.norm() == 0.0 {
            return Ok(z);
        }
        let t = |u: C64| (aspect * u + 1.0) * (u + 1.0);
        let h = |u: C64| -> Result<C64> { Ok(u * t(self.m_transform(u)?)) };
        let root = newton(
            "rectangular R-transform inversion",
            |u| Ok(h(u)? - z),
            z,
            NewtonOptions::default(),
        )?;
        let w = z / root.z;
        let disc = (1.0 - aspect).powi(2) + 4.0 * aspect * w;
        Ok((csqrt(disc) - (aspect + 1.0)) / (2.0 * aspect))
    }
}
