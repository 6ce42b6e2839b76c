//! Cauchy-kernel evaluators for the symmetrized singular-value law of S.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{arg, Result, RieError};
use crate::C64;

/// Modes whose estimated density falls below this value are treated as edge
/// modes by the estimators.
pub const DENSITY_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularSpectrum {
    gammas: Vec<f64>,
    n: usize,
    m: usize,
}

impl SingularSpectrum {
    /// Non-trivial singular values of an n x m matrix; sorted nonincreasing
    /// on construction.
    pub fn new(mut gammas: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return arg("spectrum dimensions must be positive");
        }
        if gammas.len() != n.min(m) {
            return Err(RieError::Dimension {
                expected: format!("min(N, M) = {}", n.min(m)),
                actual: format!("{} singular values", gammas.len()),
            });
        }
        if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return arg(format!("singular values must be finite and nonnegative, got {g}"));
        }
        gammas.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { gammas, n, m })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Aspect ratio N/M.
    pub fn alpha(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Number of non-trivial singular values, min(N, M).
    pub fn k(&self) -> usize {
        self.gammas.len()
    }

    /// Parses a one-column text file. Lines starting with `#` are comments;
    /// a comment of the form `# n=<N> m=<M>` supplies the dimensions, which
    /// otherwise default to a square matrix.
    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let shown = path.display().to_string();
        let mut dims: Option<(usize, usize)> = None;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut n = None;
                let mut m = None;
                for tok in rest.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("n=") {
                        n = v.parse().ok();
                    } else if let Some(v) = tok.strip_prefix("m=") {
                        m = v.parse().ok();
                    }
                }
                if let (Some(n), Some(m)) = (n, m) {
                    dims = Some((n, m));
                }
                continue;
            }
            let v: f64 = line.parse().map_err(|_| RieError::Parse {
                path: shown.clone(),
                line: i + 1,
                msg: format!("not a number: {line:?}"),
            })?;
            values.push(v);
        }
        let (n, m) = dims.unwrap_or((values.len(), values.len()));
        Self::new(values, n, m)
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = format!("# n={} m={}\n", self.n, self.m);
        for g in &self.gammas {
            let _ = writeln!(out, "{g:.17e}");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint {
    pub density: f64,
    pub hilbert: f64,
    pub edge: bool,
}

#[derive(Debug, Clone)]
pub struct SpectralEvaluator {
    spectrum: SingularSpectrum,
    eta: f64,
}

impl SpectralEvaluator {
    /// Evaluator with the default offset η = √(1/(2N)).
    pub fn new(spectrum: SingularSpectrum) -> Self {
        let eta = (1.0 / (2.0 * spectrum.n as f64)).sqrt();
        Self { spectrum, eta }
    }

    /// Default offset multiplied by the RMS singular value, so η tracks the
    /// width of the spectrum. Falls back to the default for a zero spectrum.
    pub fn scale_aware(spectrum: SingularSpectrum) -> Self {
        let k = spectrum.gammas.len().max(1) as f64;
        let rms = (spectrum.gammas.iter().map(|g| g * g).sum::<f64>() / k).sqrt();
        let mut ev = Self::new(spectrum);
        if rms > 0.0 && rms.is_finite() {
            ev.eta *= rms;
        }
        ev
    }

    pub fn with_eta(spectrum: SingularSpectrum, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return arg(format!("eta must be positive, got {eta}"));
        }
        Ok(Self { spectrum, eta })
    }

    pub fn spectrum(&self) -> &SingularSpectrum {
        &self.spectrum
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.spectrum.alpha()
    }

    /// The evaluation point γ - iη used for a mode at γ.
    pub fn point(&self, gamma: f64) -> C64 {
        C64::new(gamma, -self.eta)
    }

    /// (1/2K) Σ_k [1/(z - γ_k) + 1/(z + γ_k)].
    pub fn symmetrized_stieltjes(&self, z: C64) -> Result<C64> {
        if z.im == 0.0 && self.spectrum.gammas.iter().any(|g| *g == z.re.abs()) {
            return Err(RieError::Domain { re: z.re, im: z.im });
        }
        let g = &self.spectrum.gammas;
        let z2 = z * z;
        let sum: C64 = g.iter().map(|gk| 1.0 / (z2 - gk * gk)).sum();
        Ok(z * sum / g.len() as f64)
    }

    /// Smoothed density and Hilbert transform of the symmetrized law at x.
    pub fn density_and_hilbert(&self, x: f64) -> KernelPoint {
        let g = self
            .symmetrized_stieltjes(self.point(x))
            .expect("eta > 0 keeps the point off the real axis");
        let density = g.im / PI;
        KernelPoint {
            density,
            hilbert: g.re / PI,
            edge: density < DENSITY_FLOOR,
        }
    }
}

/// Aspect-ratio bookkeeping shared by the X and Y solvers. The rectangular
/// transforms are always taken with the short-over-long ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Regime {
    pub alpha: f64,
    /// min(α, 1/α)
    pub aspect: f64,
    /// Multiplies each rectangular R-transform: 1 for α ≤ 1, 1/α otherwise.
    pub scale: f64,
    /// Prefactor of the estimators and overlaps: 1 for α ≤ 1, α otherwise.
    pub pref: f64,
}

impl Regime {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return arg(format!("aspect ratio must be positive, got {alpha}"));
        }
        Ok(if alpha <= 1.0 {
            Regime {
                alpha,
                aspect: alpha,
                scale: 1.0,
                pref: 1.0,
            }
        } else {
            Regime {
                alpha,
                aspect: 1.0 / alpha,
                scale: 1.0 / alpha,
                pref: alpha,
            }
        })
    }

    /// Normalized traces of the N-side and M-side resolvent blocks given the
    /// symmetrized Stieltjes transform g of the non-trivial singular values.
    pub fn traces(&self, g: C64, z: C64) -> (C64, C64) {
        let a = self.alpha;
        if a <= 1.0 {
            (g, g * a + (1.0 - a) / z)
        } else {
            (g / a + (1.0 - 1.0 / a) / z, g)
        }
    }
}

/// Replaces flagged entries by the value of the nearest unflagged index
/// (ties go to the smaller index). Fails when every entry is flagged.
pub(crate) fn fill_from_nearest(values: &mut [f64], bad: &[bool]) -> Result<()> {
    let good: Vec<usize> = (0..values.len()).filter(|i| !bad[*i]).collect();
    if good.is_empty() {
        return Err(RieError::Estimation("no bulk modes left after edge screening".into()));
    }
    for i in 0..values.len() {
        if bad[i] {
            let j = match good.binary_search(&i) {
                Ok(k) => good[k],
                Err(k) if k == 0 => good[0],
                Err(k) if k == good.len() => good[k - 1],
                Err(k) => {
                    if i - good[k - 1] <= good[k] - i {
                        good[k - 1]
                    } else {
                        good[k]
                    }
                }
            };
            values[i] = values[j];
        }
    }
    Ok(())
}
