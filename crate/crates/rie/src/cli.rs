//! Experiment harness: configs, figure presets, seeded Monte-Carlo sweeps and
//! CSV output.
//!
//! A config is flat `key = value` text, lists comma separated, `#` starts a
//! comment. Keys:
//!
//! ```text
//! name          output file stem
//! x_prior       wigner | shifted_wigner:c | wishart:a | sqrt_wishart:a | bernoulli_haar:p
//! y_prior       gaussian | uniform:a:b | bernoulli_rademacher:p
//! w_prior       gaussian
//! n, m          dimensions (m is ignored when alphas is set)
//! kappas        SNR values
//! alphas        aspect ratios N/M; M = round(N/α)
//! seeds         integers or ranges a..b (inclusive)
//! estimators    rie_x, rie_x2, sqrt_x2, rie_y, denoise_xy, oracle_x, oracle_y,
//!               oracle_xy, product_xy, threshold_y(h)
//! eta_rule      fixed | scaled
//! eta_override  positive real, wins over eta_rule
//! overlap_modes 0-based singular-vector indices for the overlap figure
//! overlap_target x | y
//! output_dir    directory for the CSV files
//! ```

use std::cell::OnceCell;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensembles::{sample_w, sample_x, sample_y, observe, synthesize, EnsembleSpec, WPrior, XPrior, YPrior};
use crate::error::{arg, Result, RieError};
use crate::evaluate::{gram_eigenvector, normalized_mse, spectral_mse, MseReport, ObservationSVD, OracleValues};
use crate::rie_x::{self, XEstimate};
use crate::rie_y::{self, YEstimate};
use crate::roots::SolveOptions;
use crate::{MeasureModel, SingularSpectrum, SpectralEvaluator, C64};

pub const RESULTS_SCHEMA: &str = "rie-results v1";
pub const AGGREGATE_SCHEMA: &str = "rie-aggregate v1";
pub const TIMINGS_SCHEMA: &str = "rie-timings v1";
pub const OVERLAP_SCHEMA: &str = "rie-overlap v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    RieX,
    RieX2,
    SqrtX2,
    RieY,
    DenoiseXY,
    OracleX,
    OracleY,
    OracleXY,
    ProductXY,
    ThresholdY(f64),
}

impl Estimator {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "rie_x" => Estimator::RieX,
            "rie_x2" => Estimator::RieX2,
            "sqrt_x2" => Estimator::SqrtX2,
            "rie_y" => Estimator::RieY,
            "denoise_xy" => Estimator::DenoiseXY,
            "oracle_x" => Estimator::OracleX,
            "oracle_y" => Estimator::OracleY,
            "oracle_xy" => Estimator::OracleXY,
            "product_xy" => Estimator::ProductXY,
            _ => {
                let h = s
                    .strip_prefix("threshold_y(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|h| h.trim().parse::<f64>().ok())
                    .ok_or_else(|| RieError::Argument(format!("unknown estimator `{s}`")))?;
                if !(0.0..=1.0).contains(&h) {
                    return arg(format!("threshold h={h} not in [0, 1]"));
                }
                Estimator::ThresholdY(h)
            }
        })
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::RieX => f.write_str("rie_x"),
            Estimator::RieX2 => f.write_str("rie_x2"),
            Estimator::SqrtX2 => f.write_str("sqrt_x2"),
            Estimator::RieY => f.write_str("rie_y"),
            Estimator::DenoiseXY => f.write_str("denoise_xy"),
            Estimator::OracleX => f.write_str("oracle_x"),
            Estimator::OracleY => f.write_str("oracle_y"),
            Estimator::OracleXY => f.write_str("oracle_xy"),
            Estimator::ProductXY => f.write_str("product_xy"),
            Estimator::ThresholdY(h) => write!(f, "threshold_y({h})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtaRule {
    /// √(1/(2N)).
    Fixed,
    /// √(1/(2N)) times the RMS singular value.
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapTarget {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub x_prior: XPrior,
    pub y_prior: YPrior,
    pub w_prior: WPrior,
    pub n: usize,
    pub m: usize,
    pub kappas: Vec<f64>,
    /// Empty means the single aspect ratio n/m.
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub estimators: Vec<Estimator>,
    pub output_dir: PathBuf,
    pub eta_override: Option<f64>,
    pub eta_rule: EtaRule,
    pub overlap_modes: Vec<usize>,
    pub overlap_target: OverlapTarget,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            x_prior: XPrior::Wishart { aspect: 0.25 },
            y_prior: YPrior::GaussianIid,
            w_prior: WPrior::GaussianIid,
            n: 1000,
            m: 2000,
            kappas: vec![1.0],
            alphas: Vec::new(),
            seeds: (1..=5).collect(),
            estimators: vec![Estimator::RieX, Estimator::OracleX],
            output_dir: PathBuf::from("out"),
            eta_override: None,
            eta_rule: EtaRule::Fixed,
            overlap_modes: Vec::new(),
            overlap_target: OverlapTarget::X,
        }
    }
}

fn x_prior_str(p: &XPrior) -> String {
    match p {
        XPrior::WignerSym => "wigner".into(),
        XPrior::ShiftedWigner { c } => format!("shifted_wigner:{c}"),
        XPrior::Wishart { aspect } => format!("wishart:{aspect}"),
        XPrior::SqrtWishart { aspect } => format!("sqrt_wishart:{aspect}"),
        XPrior::BernoulliSpectralHaar { p } => format!("bernoulli_haar:{p}"),
    }
}

fn y_prior_str(p: &YPrior) -> String {
    match p {
        YPrior::GaussianIid => "gaussian".into(),
        YPrior::HaarWithSingulars(MeasureModel::UniformSingular { a, b }) => format!("uniform:{a}:{b}"),
        YPrior::HaarWithSingulars(law) => format!("{law:?}"),
        YPrior::BernoulliRademacher { p } => format!("bernoulli_rademacher:{p}"),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_params(value: &str, kind: &str, want: usize) -> std::result::Result<Vec<f64>, String> {
    let mut parts = value.split(':');
    let head = parts.next().unwrap_or_default().trim();
    if head != kind {
        return Err(format!("expected `{kind}`"));
    }
    let nums: Vec<f64> = parts
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number `{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if nums.len() != want {
        return Err(format!("`{kind}` takes {want} parameter(s)"));
    }
    Ok(nums)
}

fn parse_x_prior(v: &str) -> std::result::Result<XPrior, String> {
    let kind = v.split(':').next().unwrap_or_default().trim();
    Ok(match kind {
        "wigner" => {
            parse_params(v, kind, 0)?;
            XPrior::WignerSym
        }
        "shifted_wigner" => XPrior::ShiftedWigner { c: parse_params(v, kind, 1)?[0] },
        "wishart" => XPrior::Wishart { aspect: parse_params(v, kind, 1)?[0] },
        "sqrt_wishart" => XPrior::SqrtWishart { aspect: parse_params(v, kind, 1)?[0] },
        "bernoulli_haar" => XPrior::BernoulliSpectralHaar { p: parse_params(v, kind, 1)?[0] },
        _ => return Err(format!("unknown X prior `{v}`")),
    })
}

fn parse_y_prior(v: &str) -> std::result::Result<YPrior, String> {
    let kind = v.split(':').next().unwrap_or_default().trim();
    Ok(match kind {
        "gaussian" => {
            parse_params(v, kind, 0)?;
            YPrior::GaussianIid
        }
        "uniform" => {
            let p = parse_params(v, kind, 2)?;
            YPrior::HaarWithSingulars(MeasureModel::uniform_singular(p[0], p[1]).map_err(|e| e.to_string())?)
        }
        "bernoulli_rademacher" => YPrior::BernoulliRademacher { p: parse_params(v, kind, 1)?[0] },
        _ => return Err(format!("unknown Y prior `{v}`")),
    })
}

fn parse_list<T, F>(v: &str, f: F) -> std::result::Result<Vec<T>, String>
where
    F: Fn(&str) -> std::result::Result<T, String>,
{
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| format!("bad number `{s}`: {e}"))
}

fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (parse_num::<u64>(a)?, parse_num::<u64>(b)?);
                if b < a {
                    return Err(format!("empty seed range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(part)?),
        }
    }
    Ok(out)
}

/// Splits estimator lists on commas outside parentheses.
fn split_estimators(v: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0usize);
    for (i, ch) in v.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&v[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&v[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

impl ExperimentConfig {
    /// Applies the `key = value` lines of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let fail = |msg: String| RieError::Parse {
                path: origin.to_string(),
                line: ln + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(fail)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path, base: ExperimentConfig) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = base;
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "name" => {
                if value.is_empty() || value.contains(['/', '\\']) {
                    return Err(format!("bad name `{value}`"));
                }
                self.name = value.to_string();
            }
            "x_prior" => self.x_prior = parse_x_prior(value)?,
            "y_prior" => self.y_prior = parse_y_prior(value)?,
            "w_prior" => {
                if value != "gaussian" {
                    return Err(format!("unknown W prior `{value}`"));
                }
                self.w_prior = WPrior::GaussianIid;
            }
            "n" => self.n = parse_num(value)?,
            "m" => self.m = parse_num(value)?,
            "kappas" => self.kappas = parse_list(value, parse_num)?,
            "alphas" => self.alphas = parse_list(value, parse_num)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "estimators" => {
                self.estimators = split_estimators(value)
                    .into_iter()
                    .map(|s| Estimator::parse(s).map_err(|e| e.to_string()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "eta_override" => {
                self.eta_override = match value {
                    "" | "none" => None,
                    v => Some(parse_num(v)?),
                }
            }
            "eta_rule" => {
                self.eta_rule = match value {
                    "fixed" => EtaRule::Fixed,
                    "scaled" => EtaRule::Scaled,
                    _ => return Err(format!("unknown eta rule `{value}`")),
                }
            }
            "overlap_modes" => self.overlap_modes = parse_list(value, parse_num)?,
            "overlap_target" => {
                self.overlap_target = match value {
                    "x" => OverlapTarget::X,
                    "y" => OverlapTarget::Y,
                    _ => return Err(format!("unknown overlap target `{value}`")),
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// The config as `key = value` lines, minus the output directory.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("name = {}", self.name),
            format!("x_prior = {}", x_prior_str(&self.x_prior)),
            format!("y_prior = {}", y_prior_str(&self.y_prior)),
            "w_prior = gaussian".to_string(),
            format!("n = {}", self.n),
            format!("m = {}", self.m),
            format!("kappas = {}", join(&self.kappas)),
            format!("alphas = {}", join(&self.alphas)),
            format!("seeds = {}", join(&self.seeds)),
            format!("estimators = {}", join(&self.estimators)),
            format!(
                "eta_rule = {}",
                match self.eta_rule {
                    EtaRule::Fixed => "fixed",
                    EtaRule::Scaled => "scaled",
                }
            ),
        ];
        if let Some(e) = self.eta_override {
            lines.push(format!("eta_override = {e}"));
        }
        if !self.overlap_modes.is_empty() {
            lines.push(format!("overlap_modes = {}", join(&self.overlap_modes)));
            let t = match self.overlap_target {
                OverlapTarget::X => "x",
                OverlapTarget::Y => "y",
            };
            lines.push(format!("overlap_target = {t}"));
        }
        lines.join("\n") + "\n"
    }

    /// Aspect ratios of the sweep.
    pub fn alpha_list(&self) -> Vec<f64> {
        if self.alphas.is_empty() {
            vec![self.n as f64 / self.m as f64]
        } else {
            self.alphas.clone()
        }
    }

    fn m_for(&self, alpha: f64) -> usize {
        if self.alphas.is_empty() {
            self.m
        } else {
            ((self.n as f64 / alpha).round() as usize).max(1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return arg("n and m must be positive");
        }
        if self.kappas.is_empty() || self.seeds.is_empty() {
            return arg("kappas and seeds must be nonempty");
        }
        if self.estimators.is_empty() && self.overlap_modes.is_empty() {
            return arg("nothing to run: no estimators and no overlap modes");
        }
        if let Some(k) = self.kappas.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
            return arg(format!("kappa {k} must be finite and nonnegative"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return arg(format!("alpha {a} must be positive"));
        }
        if let Some(e) = self.eta_override {
            if !(e > 0.0 && e.is_finite()) {
                return arg(format!("eta_override {e} must be positive"));
            }
        }
        for alpha in self.alpha_list() {
            let spec = self.spec(alpha, self.kappas[0], self.seeds[0]);
            spec.validate()?;
            let k = spec.n.min(spec.m);
            if let Some(i) = self.overlap_modes.iter().find(|i| **i >= k) {
                return arg(format!("overlap mode {i} out of range for {k} singular values"));
            }
        }
        Ok(())
    }

    fn spec(&self, alpha: f64, kappa: f64, seed: u64) -> EnsembleSpec {
        EnsembleSpec {
            x_prior: self.x_prior.clone(),
            y_prior: self.y_prior.clone(),
            w_prior: self.w_prior,
            n: self.n,
            m: self.m_for(alpha),
            kappa,
            seed,
        }
    }

    fn evaluator(&self, spectrum: SingularSpectrum) -> Result<SpectralEvaluator> {
        match (self.eta_override, self.eta_rule) {
            (Some(eta), _) => SpectralEvaluator::with_eta(spectrum, eta),
            (None, EtaRule::Fixed) => Ok(SpectralEvaluator::new(spectrum)),
            (None, EtaRule::Scaled) => Ok(SpectralEvaluator::scale_aware(spectrum)),
        }
    }
}

/// Names accepted by `preset`.
pub const FIGURES: &[&str] = &[
    "x-wishart",
    "x-wigner",
    "x2-wishart",
    "x2-wigner",
    "y-uniform",
    "y-gaussian",
    "y-sparse",
    "mf-c1",
    "mf-c3",
    "x-wishart-alpha2",
    "x-wigner-alpha2",
    "y-gaussian-alpha2",
    "y-uniform-alpha2",
    "overlap-x",
    "overlap-y",
    "overlap-y-uniform",
];

/// Desk-scale configs for the published figures: N = 1000, 5 seeds and the
/// scale-aware kernel offset.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    use Estimator::*;
    let kappas = vec![0.1, 0.3, 0.6, 1.0, 2.0, 3.0, 4.0, 5.0];
    let uniform = || YPrior::HaarWithSingulars(MeasureModel::UniformSingular { a: 1.0, b: 3.0 });
    let base = ExperimentConfig {
        name: name.to_string(),
        kappas,
        eta_rule: EtaRule::Scaled,
        ..ExperimentConfig::default()
    };
    let x_cfg = |x_prior, m, est: Vec<Estimator>| ExperimentConfig {
        x_prior,
        m,
        estimators: est,
        ..base.clone()
    };
    let y_cfg = |y_prior, m, est: Vec<Estimator>| ExperimentConfig {
        x_prior: XPrior::ShiftedWigner { c: 3.0 },
        y_prior,
        m,
        estimators: est,
        ..base.clone()
    };
    let overlap = |x_prior, y_prior, target| ExperimentConfig {
        x_prior,
        y_prior,
        kappas: vec![1.0],
        seeds: (1..=200).collect(),
        estimators: Vec::new(),
        overlap_modes: vec![199, 799],
        overlap_target: target,
        ..base.clone()
    };
    let wishart = XPrior::Wishart { aspect: 0.25 };
    let wigner3 = XPrior::ShiftedWigner { c: 3.0 };
    Ok(match name {
        "x-wishart" => x_cfg(wishart, 2000, vec![RieX, OracleX, SqrtX2]),
        "x-wigner" => x_cfg(wigner3, 2000, vec![RieX, OracleX, SqrtX2]),
        "x2-wishart" => x_cfg(wishart, 2000, vec![RieX2]),
        "x2-wigner" => x_cfg(wigner3, 2000, vec![RieX2]),
        "y-uniform" => y_cfg(uniform(), 2000, vec![RieY, OracleY]),
        "y-gaussian" => y_cfg(YPrior::GaussianIid, 2000, vec![RieY, OracleY]),
        "y-sparse" => {
            let mut est = vec![RieY, OracleY];
            est.extend((0..=10).map(|i| ThresholdY(i as f64 / 10.0)));
            y_cfg(YPrior::BernoulliRademacher { p: 0.9 }, 2000, est)
        }
        "mf-c1" | "mf-c3" => ExperimentConfig {
            x_prior: XPrior::ShiftedWigner {
                c: if name == "mf-c1" { 1.0 } else { 3.0 },
            },
            estimators: vec![RieX, OracleX, RieY, OracleY, DenoiseXY, ProductXY, OracleXY],
            ..base.clone()
        },
        "x-wishart-alpha2" => x_cfg(wishart, 500, vec![RieX, OracleX]),
        "x-wigner-alpha2" => x_cfg(wigner3, 500, vec![RieX, OracleX]),
        "y-gaussian-alpha2" => y_cfg(YPrior::GaussianIid, 500, vec![RieY, OracleY]),
        "y-uniform-alpha2" => y_cfg(uniform(), 500, vec![RieY, OracleY]),
        "overlap-x" => overlap(XPrior::WignerSym, YPrior::GaussianIid, OverlapTarget::X),
        "overlap-y" => overlap(wigner3, YPrior::GaussianIid, OverlapTarget::Y),
        "overlap-y-uniform" => overlap(wigner3, uniform(), OverlapTarget::Y),
        _ => return arg(format!("unknown figure `{name}`; known: {}", FIGURES.join(", "))),
    })
}

/// One estimator on one (κ, α, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub estimator: String,
    pub kappa: f64,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub normalized_mse: f64,
    pub raw_mse: f64,
    pub edge_modes: usize,
    pub max_residual: f64,
    pub solver_failures: usize,
    /// `ok` or the error message.
    pub status: String,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub estimator: String,
    pub kappa: f64,
    pub alpha: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<Row>,
    pub aggregate: Vec<AggregateRow>,
}

impl RunSummary {
    pub fn mean(&self, estimator: &str, kappa: f64, alpha: f64) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|a| a.estimator == estimator && a.kappa == kappa && (a.alpha - alpha).abs() < 1e-12)
            .map(|a| a.mean)
    }
}

struct Outcome {
    report: MseReport,
    edge: usize,
    residual: f64,
    failures: usize,
}

impl Outcome {
    fn plain(report: MseReport) -> Self {
        Self {
            report,
            edge: 0,
            residual: 0.0,
            failures: 0,
        }
    }

    fn from_x(report: MseReport, e: &XEstimate) -> Self {
        Self {
            report,
            edge: e.edge_count(),
            residual: e.max_residual,
            failures: e.solver_failures,
        }
    }

    fn from_y(report: MseReport, e: &YEstimate) -> Self {
        Self {
            report,
            edge: e.edge_count(),
            residual: e.max_residual,
            failures: e.solver_failures,
        }
    }
}

type Cached<T> = OnceCell<std::result::Result<T, String>>;

fn cached<'a, T>(cell: &'a Cached<T>, f: impl FnOnce() -> Result<T>) -> Result<&'a T> {
    cell.get_or_init(|| f().map_err(|e| e.to_string()))
        .as_ref()
        .map_err(|e| RieError::Estimation(e.clone()))
}

/// Everything one cell computes once and shares between estimators.
struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    kappa: f64,
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    svd: ObservationSVD,
    orc: OracleValues,
    ev: SpectralEvaluator,
    mu_y: MeasureModel,
    mu_w: MeasureModel,
    rie_x: Cached<XEstimate>,
    rie_x2: Cached<XEstimate>,
    rie_y: Cached<YEstimate>,
    y_hat: Cached<DMatrix<f64>>,
    x2_oracle: Cached<(Vec<f64>, f64)>,
}

impl Cell<'_> {
    fn rho_x(&self) -> Result<MeasureModel> {
        self.cfg
            .x_prior
            .spectral_law()
            .ok_or_else(|| RieError::Estimation("the X prior has no closed-form eigenvalue law".into()))
    }

    fn rie_x(&self) -> Result<&XEstimate> {
        cached(&self.rie_x, || rie_x::estimate_x(&self.ev, &self.rho_x()?, &self.mu_y, &self.mu_w, self.kappa))
    }

    fn rie_x2(&self) -> Result<&XEstimate> {
        cached(&self.rie_x2, || rie_x::estimate_x2(&self.ev, &self.mu_y, &self.mu_w, self.kappa))
    }

    fn rie_y(&self) -> Result<&YEstimate> {
        cached(&self.rie_y, || rie_y::estimate_y(&self.ev, &self.rho_x()?, &self.mu_w, self.kappa))
    }

    fn y_hat(&self) -> Result<&DMatrix<f64>> {
        cached(&self.y_hat, || self.svd.assemble_y(&self.rie_y()?.xi))
    }

    /// u_iᵀX²u_i and ‖X²‖².
    fn x2_oracle(&self) -> Result<&(Vec<f64>, f64)> {
        cached(&self.x2_oracle, || {
            let xu = &self.x * &self.svd.u;
            let vals = (0..self.svd.n()).map(|i| xu.column(i).norm_squared()).collect();
            Ok((vals, (&self.x * &self.x).norm_squared()))
        })
    }

    fn evaluate(&self, est: Estimator) -> Result<Outcome> {
        let o = &self.orc;
        let x_mse = |xi: &[f64]| spectral_mse(xi, &o.x, o.x_norm_sq);
        let y_mse = |xi: &[f64]| spectral_mse(xi, &o.y, o.y_norm_sq);
        let xy_mse = |xi: &[f64]| spectral_mse(xi, &o.xy, o.xy_norm_sq);
        Ok(match est {
            Estimator::OracleX => Outcome::plain(x_mse(&o.x)?),
            Estimator::OracleY => Outcome::plain(y_mse(&o.y)?),
            Estimator::OracleXY => Outcome::plain(xy_mse(&o.xy)?),
            Estimator::RieX => {
                let e = self.rie_x()?;
                Outcome::from_x(x_mse(&e.xi)?, e)
            }
            Estimator::RieX2 => {
                let e = self.rie_x2()?;
                let (orc, norm) = self.x2_oracle()?;
                Outcome::from_x(spectral_mse(&e.xi, orc, *norm)?, e)
            }
            Estimator::SqrtX2 => {
                let e = rie_x::sqrt_psd_estimate(self.rie_x2()?)?;
                Outcome::from_x(x_mse(&e.xi)?, &e)
            }
            Estimator::RieY => {
                let e = self.rie_y()?;
                Outcome::from_y(y_mse(&e.xi)?, e)
            }
            Estimator::DenoiseXY => {
                let e = rie_y::denoise_xy(&self.ev, &self.mu_w, self.kappa)?;
                Outcome::from_y(xy_mse(&e.xi)?, &e)
            }
            Estimator::ProductXY => {
                let (ex, ey) = (self.rie_x()?, self.rie_y()?);
                let xi: Vec<f64> = ey.xi.iter().zip(&ex.xi).map(|(a, b)| a * b).collect();
                Outcome {
                    edge: ex.edge_count().max(ey.edge_count()),
                    residual: ex.max_residual.max(ey.max_residual),
                    failures: ex.solver_failures + ey.solver_failures,
                    report: xy_mse(&xi)?,
                }
            }
            Estimator::ThresholdY(h) => {
                let e = self.rie_y()?;
                let t = rie_y::threshold_sparse(self.y_hat()?, h, self.cfg.n)?;
                Outcome::from_y(normalized_mse(&t, &self.y)?, e)
            }
        })
    }
}

fn error_row(est: &Estimator, spec: &EnsembleSpec, alpha: f64, msg: String) -> Row {
    Row {
        estimator: est.to_string(),
        kappa: spec.kappa,
        alpha,
        n: spec.n,
        m: spec.m,
        seed: spec.seed,
        normalized_mse: f64::NAN,
        raw_mse: f64::NAN,
        edge_modes: 0,
        max_residual: f64::NAN,
        solver_failures: 0,
        status: msg,
        wall_seconds: 0.0,
    }
}

fn run_cell(cfg: &ExperimentConfig, alpha: f64, kappa: f64, seed: u64) -> Vec<Row> {
    let spec = cfg.spec(alpha, kappa, seed);
    let start = Instant::now();
    let setup = (|| -> Result<Cell<'_>> {
        let obs = synthesize(&spec)?;
        let svd = ObservationSVD::from_observation(&obs.s)?;
        let orc = OracleValues::compute(&svd, &obs.x, &obs.y)?;
        let ev = cfg.evaluator(svd.gammas.clone())?;
        Ok(Cell {
            cfg,
            kappa,
            x: obs.x,
            y: obs.y,
            svd,
            orc,
            ev,
            mu_y: spec.y_prior.singular_law(spec.n, spec.m),
            mu_w: spec.w_prior.singular_law(spec.n, spec.m),
            rie_x: OnceCell::new(),
            rie_x2: OnceCell::new(),
            rie_y: OnceCell::new(),
            y_hat: OnceCell::new(),
            x2_oracle: OnceCell::new(),
        })
    })();
    let setup_time = start.elapsed().as_secs_f64();
    let cell = match setup {
        Ok(c) => c,
        Err(e) => {
            let msg = format!("setup failed: {e}");
            return cfg.estimators.iter().map(|est| error_row(est, &spec, alpha, msg.clone())).collect();
        }
    };
    cfg.estimators
        .iter()
        .map(|est| {
            let t = Instant::now();
            let res = cell.evaluate(*est);
            let wall = setup_time + t.elapsed().as_secs_f64();
            match res {
                Ok(out) => Row {
                    estimator: est.to_string(),
                    kappa,
                    alpha,
                    n: spec.n,
                    m: spec.m,
                    seed,
                    normalized_mse: out.report.normalized_mse,
                    raw_mse: out.report.raw_mse,
                    edge_modes: out.edge,
                    max_residual: out.residual,
                    solver_failures: out.failures,
                    status: "ok".into(),
                    wall_seconds: wall,
                },
                Err(e) => Row {
                    wall_seconds: wall,
                    ..error_row(est, &spec, alpha, e.to_string())
                },
            }
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RieError::Estimation(format!("cannot start worker pool: {e}")))
}

/// Runs every (α, κ, seed + offset) cell and returns rows in sweep order:
/// α outermost, then κ, seed and the configured estimator order. Solver
/// failures become row statuses and never stop the sweep.
pub fn run_rows(cfg: &ExperimentConfig, workers: usize, seed_offset: u64) -> Result<Vec<Row>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for alpha in cfg.alpha_list() {
        for &kappa in &cfg.kappas {
            for &seed in &cfg.seeds {
                let seed = seed
                    .checked_add(seed_offset)
                    .ok_or_else(|| RieError::Argument("seed offset overflows".into()))?;
                cells.push((alpha, kappa, seed));
            }
        }
    }
    let rows: Vec<Vec<Row>> =
        pool(workers)?.install(|| cells.par_iter().map(|(a, k, s)| run_cell(cfg, *a, *k, *s)).collect());
    Ok(rows.into_iter().flatten().collect())
}

/// Mean and standard error over seeds of every (estimator, κ, α) group,
/// skipping failed rows.
pub fn aggregate(rows: &[Row]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let pos = out
            .iter()
            .position(|a| a.estimator == r.estimator && a.kappa == r.kappa && a.alpha == r.alpha);
        let i = match pos {
            Some(i) => i,
            None => {
                out.push(AggregateRow {
                    estimator: r.estimator.clone(),
                    kappa: r.kappa,
                    alpha: r.alpha,
                    n_ok: 0,
                    n_failed: 0,
                    mean: f64::NAN,
                    stderr: f64::NAN,
                });
                values.push(Vec::new());
                out.len() - 1
            }
        };
        if r.status == "ok" && r.normalized_mse.is_finite() {
            values[i].push(r.normalized_mse);
        } else {
            out[i].n_failed += 1;
        }
    }
    for (a, v) in out.iter_mut().zip(&values) {
        a.n_ok = v.len();
        if v.is_empty() {
            continue;
        }
        let n = v.len() as f64;
        a.mean = v.iter().sum::<f64>() / n;
        a.stderr = if v.len() > 1 {
            let var = v.iter().map(|x| (x - a.mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
    }
    out
}

fn header(schema: &str, cfg: &ExperimentConfig, seed_offset: u64) -> String {
    let mut s = format!("# {schema}\n");
    for line in cfg.to_text().lines() {
        s.push_str(&format!("# {line}\n"));
    }
    s.push_str(&format!("# seed_offset = {seed_offset}\n"));
    s
}

fn write_csv<F>(path: &Path, meta: &str, head: &[&str], fill: F) -> Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = meta.as_bytes().to_vec();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let res = w.write_record(head).and_then(|_| fill(&mut w)).and_then(|_| Ok(w.flush()?));
        res.map_err(|e| RieError::Estimation(format!("csv: {e}")))?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Writes `<name>.csv`, `<name>_aggregate.csv` and `<name>_timings.csv`.
/// The first two depend only on the config and seeds; wall times live in
/// the third.
pub fn write_outputs(cfg: &ExperimentConfig, seed_offset: u64, summary: &RunSummary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let rows_path = dir.join(format!("{}.csv", cfg.name));
    let agg_path = dir.join(format!("{}_aggregate.csv", cfg.name));
    let time_path = dir.join(format!("{}_timings.csv", cfg.name));
    write_csv(
        &rows_path,
        &header(RESULTS_SCHEMA, cfg, seed_offset),
        &[
            "estimator", "kappa", "alpha", "n", "m", "seed", "normalized_mse", "raw_mse", "edge_modes",
            "max_residual", "solver_failures", "status",
        ],
        |w| {
            for r in &summary.rows {
                w.write_record([
                    r.estimator.clone(),
                    r.kappa.to_string(),
                    r.alpha.to_string(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.seed.to_string(),
                    r.normalized_mse.to_string(),
                    r.raw_mse.to_string(),
                    r.edge_modes.to_string(),
                    r.max_residual.to_string(),
                    r.solver_failures.to_string(),
                    r.status.clone(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_csv(
        &agg_path,
        &header(AGGREGATE_SCHEMA, cfg, seed_offset),
        &["estimator", "kappa", "alpha", "n_ok", "n_failed", "mean", "stderr"],
        |w| {
            for a in &summary.aggregate {
                w.write_record([
                    a.estimator.clone(),
                    a.kappa.to_string(),
                    a.alpha.to_string(),
                    a.n_ok.to_string(),
                    a.n_failed.to_string(),
                    a.mean.to_string(),
                    a.stderr.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_csv(
        &time_path,
        &header(TIMINGS_SCHEMA, cfg, seed_offset),
        &["estimator", "kappa", "alpha", "seed", "wall_seconds"],
        |w| {
            for r in &summary.rows {
                w.write_record([
                    r.estimator.clone(),
                    r.kappa.to_string(),
                    r.alpha.to_string(),
                    r.seed.to_string(),
                    format!("{:.6}", r.wall_seconds),
                ])?;
            }
            Ok(())
        },
    )?;
    Ok(vec![rows_path, agg_path, time_path])
}

/// Sweep plus aggregation, without touching the file system.
pub fn run(cfg: &ExperimentConfig, workers: usize, seed_offset: u64) -> Result<RunSummary> {
    let rows = run_rows(cfg, workers, seed_offset)?;
    let aggregate = aggregate(&rows);
    Ok(RunSummary { rows, aggregate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPoint {
    pub mode: usize,
    /// Mean singular value of the mode across seeds.
    pub gamma: f64,
    /// λ_j of X or σ_j of Y.
    pub value: f64,
    pub theory: f64,
    pub monte_carlo_mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct OverlapFigure {
    pub target: OverlapTarget,
    pub kappa: f64,
    pub alpha: f64,
    pub seeds: usize,
    pub eta: f64,
    /// Grouped by mode, values ascending within a mode.
    pub points: Vec<OverlapPoint>,
}

struct SeedOverlap {
    gammas: Vec<f64>,
    per_mode: Vec<Vec<f64>>,
}

/// Rescaled overlaps between chosen singular vectors of S and the
/// eigenvectors of a fixed X (or singular pairs of a fixed Y), averaged over
/// seeds, next to the theory evaluated with the kernel transform pooled over
/// all seeds. Uses the first κ and α of the config.
pub fn emit_overlap_figure(
    cfg: &ExperimentConfig,
    modes: &[usize],
    workers: usize,
    seed_offset: u64,
) -> Result<OverlapFigure> {
    cfg.validate()?;
    if modes.is_empty() {
        return arg("no overlap modes requested");
    }
    let alpha = cfg.alpha_list()[0];
    let kappa = cfg.kappas[0];
    let base = cfg.spec(alpha, kappa, cfg.seeds[0].saturating_add(seed_offset));
    let (n, m) = (base.n, base.m);
    let k = n.min(m);
    if let Some(i) = modes.iter().find(|i| **i >= k) {
        return arg(format!("overlap mode {i} out of range for {k} singular values"));
    }
    let x_fixed = sample_x(&base, base.seed)?;
    let y_fixed = sample_y(&base, base.seed)?;
    // eigenvectors of X by ascending λ, or singular pairs of Y by ascending σ
    let (values, left, right) = match cfg.overlap_target {
        OverlapTarget::X => {
            let eig = x_fixed.clone().symmetric_eigen();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
            let vals: Vec<f64> = idx.iter().map(|i| eig.eigenvalues[*i]).collect();
            let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
            (vals, vecs, None)
        }
        OverlapTarget::Y => {
            let ysvd = ObservationSVD::from_observation(&y_fixed)?;
            let g = ysvd.gammas.gammas();
            let order: Vec<usize> = (0..k).rev().collect();
            let vals = order.iter().map(|i| g[*i]).collect();
            let l = DMatrix::from_fn(n, k, |r, c| ysvd.u[(r, order[c])]);
            let rt = DMatrix::from_fn(m, k, |r, c| ysvd.v[(r, order[c])]);
            (vals, l, Some(rt))
        }
    };
    let seeds: Vec<u64> = cfg
        .seeds
        .iter()
        .map(|s| s.checked_add(seed_offset).ok_or_else(|| RieError::Argument("seed offset overflows".into())))
        .collect::<Result<_>>()?;
    let one_seed = |seed: u64| -> Result<SeedOverlap> {
        let spec = EnsembleSpec { seed, ..base.clone() };
        let (x, y) = match cfg.overlap_target {
            OverlapTarget::X => (x_fixed.clone(), sample_y(&spec, seed)?),
            OverlapTarget::Y => (sample_x(&spec, seed)?, y_fixed.clone()),
        };
        let s = observe(&x, &y, &sample_w(&spec, seed)?, kappa)?;
        let gram = &s * s.transpose();
        let mut ev: Vec<f64> = gram.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let gammas: Vec<f64> = ev[..k].iter().map(|l| l.max(0.0).sqrt()).collect();
        let mut per_mode = Vec::with_capacity(modes.len());
        for &i in modes {
            let below = if i + 1 < ev.len() { ev[i] - ev[i + 1] } else { ev[i] };
            let above = if i > 0 { ev[i - 1] - ev[i] } else { below };
            let u = gram_eigenvector(&gram, ev[i], below.min(above))?;
            let proj_l = left.transpose() * &u;
            let ov = match &right {
                None => proj_l.iter().map(|p| n as f64 * p * p).collect(),
                Some(r) => {
                    let v = s.transpose() * &u / gammas[i];
                    let proj_r = r.transpose() * v;
                    proj_l.iter().zip(proj_r.iter()).map(|(a, b)| n as f64 * a * b).collect()
                }
            };
            per_mode.push(ov);
        }
        Ok(SeedOverlap { gammas, per_mode })
    };
    let results: Vec<SeedOverlap> =
        pool(workers)?.install(|| seeds.par_iter().map(|s| one_seed(*s)).collect::<Result<_>>())?;

    let evals = results
        .iter()
        .map(|r| SingularSpectrum::new(r.gammas.clone(), n, m))
        .collect::<Result<Vec<_>>>()?;
    let eta = cfg.evaluator(evals[0].clone())?.eta();
    let evals = evals
        .into_iter()
        .map(|sp| SpectralEvaluator::with_eta(sp, eta))
        .collect::<Result<Vec<_>>>()?;
    let pooled_g = |z: C64| -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for e in &evals {
            acc += e.symmetrized_stieltjes(z)?;
        }
        Ok(acc / evals.len() as f64)
    };
    let mu_y = base.y_prior.singular_law(n, m);
    let mu_w = base.w_prior.singular_law(n, m);
    let opts = SolveOptions::default();
    let count = results.len() as f64;
    let mut points = Vec::new();
    for (slot, &mode) in modes.iter().enumerate() {
        let gamma = results.iter().map(|r| r.gammas[mode]).sum::<f64>() / count;
        let z = C64::new(gamma, -eta);
        let g = pooled_g(z)?;
        let theory: Box<dyn Fn(f64) -> f64> = match cfg.overlap_target {
            OverlapTarget::X => {
                let p = rie_x::solve_x_params_at(g, z, &mu_y, &mu_w, alpha, &opts)?;
                Box::new(move |l| rie_x::overlap_x_theory(&p, l, kappa))
            }
            OverlapTarget::Y => {
                let rho = base
                    .x_prior
                    .spectral_law()
                    .ok_or_else(|| RieError::Estimation("the X prior has no closed-form eigenvalue law".into()))?;
                let p = rie_y::solve_y_params_at(g, z, &rho, &mu_w, alpha, &opts)?;
                Box::new(move |s| rie_y::overlap_y_theory(&p, s, kappa))
            }
        };
        for (j, &value) in values.iter().enumerate() {
            let samples: Vec<f64> = results.iter().map(|r| r.per_mode[slot][j]).collect();
            let mean = samples.iter().sum::<f64>() / count;
            let stderr = if samples.len() > 1 {
                (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0) / count).sqrt()
            } else {
                0.0
            };
            points.push(OverlapPoint {
                mode,
                gamma,
                value,
                theory: theory(value),
                monte_carlo_mean: mean,
                stderr,
            });
        }
    }
    Ok(OverlapFigure {
        target: cfg.overlap_target,
        kappa,
        alpha,
        seeds: seeds.len(),
        eta,
        points,
    })
}

/// Writes `<name>_overlap.csv`.
pub fn write_overlap(cfg: &ExperimentConfig, seed_offset: u64, fig: &OverlapFigure) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(format!("{}_overlap.csv", cfg.name));
    let col = match fig.target {
        OverlapTarget::X => "lambda",
        OverlapTarget::Y => "sigma",
    };
    write_csv(
        &path,
        &header(OVERLAP_SCHEMA, cfg, seed_offset),
        &["mode", "gamma", col, "theory", "monte_carlo_mean", "stderr"],
        |w| {
            for p in &fig.points {
                w.write_record([
                    p.mode.to_string(),
                    p.gamma.to_string(),
                    p.value.to_string(),
                    p.theory.to_string(),
                    p.monte_carlo_mean.to_string(),
                    p.stderr.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    Ok(path)
}
