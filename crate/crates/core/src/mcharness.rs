//! Seeded Monte Carlo experiments: replicate generation, alignment, error
//! rows, KS and coverage statistics, method comparison and scaling studies.
//!
//! Replicate `t` draws its noise from `replicate_seed(seed, t)`; class
//! covariances are realized once per experiment from `seed`. Replicates run
//! on the current rayon pool and are merged by index, so results do not
//! depend on the number of threads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    diagonal_deletion_pca, gram, hetero_pca, idealized_oracle, vanilla_pca, HeteroPcaConfig,
    SubspaceEstimate,
};
use crate::inference::{
    class_cov_estimate, cov_deviation, diagnostics, ellipse_at, normal_cdf, pivots_for_rows,
    chi2_quantile, CovDeviation, Diagnostics, Ellipse, EntrywiseLaw,
};
use crate::matlin::{matmul, procrustes, write_float, Frame, Mat};
use crate::synthgen::{
    build_signal, generate_dataset, realize_all, replicate_seed, MixtureSpec, Preset, RealizedCov,
    SignalModel,
};

/// Fraction of failed replicates above which an experiment is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hetero,
    Deletion,
    Vanilla,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hetero => "hetero",
            Method::Deletion => "deletion",
            Method::Vanilla => "vanilla",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hetero" => Ok(Method::Hetero),
            "deletion" => Ok(Method::Deletion),
            "vanilla" => Ok(Method::Vanilla),
            "oracle" => Ok(Method::Oracle),
            _ => Err(Error::Parameter(format!(
                "unknown method `{}` (expected hetero, deletion, vanilla or oracle)",
                s
            ))),
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Hetero]
}

fn default_level() -> f64 {
    0.95
}

fn default_one() -> f64 {
    1.0
}

fn default_rows() -> Vec<usize> {
    vec![0]
}

/// Which rows and columns of `ÛO_* − U` to record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_rows")]
    pub rows: Vec<usize>,
    /// Empty means every column.
    #[serde(default)]
    pub cols: Vec<usize>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            rows: default_rows(),
            cols: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<MixtureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub rank: usize,
    #[serde(default)]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Multiplies every noise row.
    #[serde(default = "default_one")]
    pub noise_scale: f64,
    /// Multiplies the signal `M`.
    #[serde(default = "default_one")]
    pub signal_scale: f64,
    /// Angle study: one experiment per θ, overriding the angle preset's θ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// Scaling studies whose slopes are attached to the summary.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scaling: Vec<ScalingConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub axis: ScaleAxis,
    pub grid: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_preset(preset: Preset, rank: usize, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            spec: None,
            preset: Some(preset),
            rank,
            replicates,
            seed: Some(seed),
            methods: default_methods(),
            outputs: OutputSpec::default(),
            level: default_level(),
            noise_scale: 1.0,
            signal_scale: 1.0,
            thetas: None,
            scaling: Vec::new(),
        }
    }

    pub fn from_spec(spec: MixtureSpec, rank: usize, replicates: usize, seed: u64) -> Self {
        ExperimentConfig {
            spec: Some(spec),
            preset: None,
            ..Self::from_preset(Preset::Figure1, rank, replicates, seed)
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checks that exactly one of `spec` and `preset` is given and valid.
    pub fn validate_source(&self) -> Result<()> {
        match (&self.spec, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(Error::config("preset", "give either `spec` or `preset`, not both"))
            }
            (None, None) => return Err(Error::config("spec", "one of `spec` or `preset` is required")),
            (Some(s), None) => s.validate()?,
            _ => {}
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(Error::config("noise_scale", "must be finite and >= 0"));
        }
        if !(self.signal_scale > 0.0) || !self.signal_scale.is_finite() {
            return Err(Error::config("signal_scale", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_source()?;
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be >= 1"));
        }
        if self.rank == 0 {
            return Err(Error::config("rank", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level", format!("must lie in (0,1), got {}", self.level)));
        }
        if let Some(th) = &self.thetas {
            if !matches!(self.preset, Some(Preset::Angle { .. })) {
                return Err(Error::config("thetas", "only valid with an angle preset"));
            }
            if th.is_empty() {
                return Err(Error::config("thetas", "must not be empty"));
            }
            if let Some(t) = th.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(Error::config("thetas", format!("theta {} outside [0,1]", t)));
            }
        }
        Ok(())
    }

    /// The mixture this configuration describes.
    pub fn mixture(&self) -> Result<MixtureSpec> {
        match (&self.spec, &self.preset) {
            (Some(s), None) => Ok(s.clone()),
            (None, Some(p)) => p.spec(),
            _ => Err(Error::config("spec", "one of `spec` or `preset` is required")),
        }
    }

    /// Copies of this configuration, one per θ of an angle study.
    pub fn angle_configs(&self) -> Result<Vec<(f64, ExperimentConfig)>> {
        let thetas = self
            .thetas
            .clone()
            .ok_or_else(|| Error::config("thetas", "not an angle study"))?;
        Ok(thetas
            .into_iter()
            .map(|theta| {
                let mut c = self.clone();
                c.preset = Some(Preset::Angle { theta });
                c.thetas = None;
                (theta, c)
            })
            .collect())
    }
}

/// Ground truth shared by all replicates of an experiment.
#[derive(Clone, Debug)]
pub struct Setup {
    pub spec: MixtureSpec,
    pub signal: SignalModel,
    /// Covariances of the (scaled) noise rows.
    pub covs: Vec<RealizedCov>,
    pub law: EntrywiseLaw,
    pub diagnostics: Diagnostics,
}

/// Builds the signal, covariances, law and diagnostics of a configuration.
/// Only the mixture source and scales are validated.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate_source()?;
    let spec = cfg.mixture()?;
    let base = build_signal(&spec)?;
    if cfg.rank > base.rank() {
        return Err(Error::Parameter(format!(
            "rank {} exceeds the signal rank {}",
            cfg.rank,
            base.rank()
        )));
    }
    let signal = if cfg.signal_scale != 1.0 {
        base.scaled(cfg.signal_scale)
    } else {
        base
    };
    let covs: Vec<RealizedCov> = realize_all(&spec, &signal, cfg.base_seed())?
        .into_iter()
        .map(|c| if cfg.noise_scale != 1.0 { c.scaled(cfg.noise_scale) } else { c })
        .collect();
    let law = EntrywiseLaw::from_signal(&signal, &covs)?;
    let diagnostics = diagnostics(&signal, &covs)?;
    Ok(Setup {
        spec,
        signal,
        covs,
        law,
        diagnostics,
    })
}

/// Aligned error rows `(ÛO_* − U)_{i·}` and their `Λ`-scaled versions.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRows {
    pub rotation: Mat,
    pub raw: Vec<Vec<f64>>,
    pub scaled: Vec<Vec<f64>>,
}

pub fn align_and_extract(u_hat: &Frame, signal: &SignalModel, rows: &[usize]) -> Result<ErrorRows> {
    if u_hat.n() != signal.n() || u_hat.r() != signal.rank() {
        return Err(Error::Shape(format!(
            "estimate is {}x{} but U is {}x{}",
            u_hat.n(),
            u_hat.r(),
            signal.n(),
            signal.rank()
        )));
    }
    if let Some(i) = rows.iter().find(|&&i| i >= signal.n()) {
        return Err(Error::Parameter(format!("row {} out of range", i)));
    }
    let o = procrustes(u_hat, &signal.u)?;
    let aligned = matmul(u_hat.mat(), &o)?;
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            aligned
                .row(i)
                .iter()
                .zip(signal.u.row(i))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();
    let scaled = raw
        .iter()
        .map(|e| e.iter().zip(&signal.lambdas).map(|(x, l)| x * l).collect())
        .collect();
    Ok(ErrorRows {
        rotation: o,
        raw,
        scaled,
    })
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and Φ.
pub fn ks_stat(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Parameter(format!(
            "KS needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Parameter("KS samples contain NaN".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = normal_cdf(x);
        acc.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    }))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = p * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    quantile_sorted(&xs, 0.5)
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Parameter("slope fit needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("slope fit needs distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedRow {
    pub replicate: usize,
    pub method: Method,
    pub row: usize,
    pub col: usize,
    pub raw: f64,
    pub lambda_scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub method: Method,
    pub row: usize,
    pub col: usize,
    pub samples: usize,
    pub ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowCoverage {
    pub row: usize,
    pub covered: usize,
    pub total: usize,
    pub fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: Method,
    pub level: f64,
    pub rows: Vec<RowCoverage>,
    /// Pooled over rows; `None` when no pivot could be formed.
    pub overall: Option<f64>,
    /// Replicates whose `Ŝ^(k)` was singular.
    pub undefined: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    pub method: Method,
    pub replicates: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    /// Per class, median over replicates of the mean row error norm within the class.
    pub class_row_error: Vec<f64>,
    /// Per class, median over replicates of the norm of the mean error row
    /// within the class (the systematic shift of the class cluster).
    pub class_centroid_error: Vec<f64>,
    /// Per-replicate `ℓ2,∞` errors in replicate order.
    pub per_replicate: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTrace {
    pub replicate: usize,
    pub iterations: usize,
    pub converged: bool,
    pub diag_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassDeviation {
    pub replicate: usize,
    pub class: usize,
    pub deviation: CovDeviation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowEllipses {
    pub row: usize,
    pub theoretical: Ellipse,
    pub empirical: Ellipse,
    /// Area of the symmetric difference over area of the union.
    pub mismatch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub variable: String,
    pub grid: Vec<f64>,
    pub medians: Vec<f64>,
    pub slope: f64,
    /// Grid points outside the Assumption 2 regime.
    pub flagged: Vec<bool>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McSummary {
    pub replicates: usize,
    pub rows: Vec<RecordedRow>,
    pub ks: Vec<KsEntry>,
    pub coverage: CoverageReport,
    pub l2inf: Vec<MethodErrors>,
    pub slopes: Vec<SlopeFit>,
    pub traces: Vec<ReplicateTrace>,
    pub deviations: Vec<ClassDeviation>,
    pub ellipses: Vec<RowEllipses>,
    pub failures: Vec<ReplicateFailure>,
    pub diagnostics: Diagnostics,
    /// Theoretical `σ_ij` of the recorded rows, one vector per recorded row.
    pub theoretical_sd: Vec<Vec<f64>>,
}

struct MethodOutcome {
    errors: ErrorRows,
    l2inf: f64,
    class_err: Vec<f64>,
    class_shift: Vec<f64>,
}

struct Outcome {
    methods: Vec<MethodOutcome>,
    trace: Option<ReplicateTrace>,
    pivots: Option<Vec<Vec<f64>>>,
    deviations: Vec<CovDeviation>,
}

fn estimate(
    method: Method,
    ahat: &Mat,
    a: Option<&Mat>,
    rank: usize,
) -> Result<SubspaceEstimate> {
    match method {
        Method::Hetero => hetero_pca(ahat, &HeteroPcaConfig::new(rank)),
        Method::Deletion => diagonal_deletion_pca(ahat, rank),
        Method::Vanilla => vanilla_pca(ahat, rank),
        Method::Oracle => {
            let a = a.expect("oracle needs the noise-free Gram matrix");
            idealized_oracle(a, &ahat.sub(a)?, rank)
        }
    }
}

fn run_replicate(cfg: &ExperimentConfig, setup: &Setup, a: Option<&Mat>, t: usize) -> Result<Outcome> {
    let signal = &setup.signal;
    let seed = replicate_seed(cfg.base_seed(), t as u64);
    let data = generate_dataset(signal, &setup.covs, setup.spec.noise_driver, 1.0, seed)?;
    let ahat = gram(&data.mhat);
    let k = signal.num_classes();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut trace = None;
    let mut pivots = None;
    let mut deviations = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let est = estimate(method, &ahat, a, cfg.rank)?;
        if method == Method::Hetero && trace.is_none() {
            trace = Some(ReplicateTrace {
                replicate: t,
                iterations: est.iterations,
                converged: est.converged,
                diag_trace: est.diag_trace.clone(),
            });
        }
        let all: Vec<usize> = (0..signal.n()).collect();
        let full = align_and_extract(&est.frame, signal, &all)?;
        let norms: Vec<f64> = full.raw.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let l2inf = norms.iter().cloned().fold(0.0, f64::max);
        let mut class_err = vec![0.0; k];
        let mut counts = vec![0usize; k];
        let r = signal.rank();
        let mut sums = vec![vec![0.0; r]; k];
        for (i, &c) in signal.labels.iter().enumerate() {
            class_err[c] += norms[i];
            counts[c] += 1;
            sums[c].iter_mut().zip(&full.raw[i]).for_each(|(s, x)| *s += x);
        }
        class_err.iter_mut().zip(&counts).for_each(|(e, &c)| *e /= c as f64);
        let class_shift: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s.iter().map(|x| (x / c as f64).powi(2)).sum::<f64>().sqrt())
            .collect();
        let errors = ErrorRows {
            rotation: full.rotation.clone(),
            raw: cfg.outputs.rows.iter().map(|&i| full.raw[i].clone()).collect(),
            scaled: cfg.outputs.rows.iter().map(|&i| full.scaled[i].clone()).collect(),
        };
        if mi == 0 {
            let est_cov = class_cov_estimate(&est.frame, &signal.labels)?;
            pivots = pivots_for_rows(&est.frame, &est_cov, &signal.labels, &cfg.outputs.rows).ok();
            for c in 0..k {
                if let Ok(dev) = cov_deviation(&setup.law.per_class_s[c], &est_cov.s_hat[c], &full.rotation) {
                    deviations.push(dev);
                } else {
                    deviations.clear();
                    break;
                }
            }
        }
        methods.push(MethodOutcome {
            errors,
            l2inf,
            class_err,
            class_shift,
        });
    }
    Ok(Outcome {
        methods,
        trace,
        pivots,
        deviations,
    })
}

/// Area of the symmetric difference of two ellipses over the area of their
/// union, estimated on a `grid×grid` lattice over a common bounding box.
pub fn ellipse_mismatch(a: &Ellipse, b: &Ellipse, grid: usize) -> f64 {
    let reach = a.axes[0].max(b.axes[0]);
    let xmin = a.center[0].min(b.center[0]) - reach;
    let xmax = a.center[0].max(b.center[0]) + reach;
    let ymin = a.center[1].min(b.center[1]) - reach;
    let ymax = a.center[1].max(b.center[1]) + reach;
    let (mut union, mut sym) = (0usize, 0usize);
    for ix in 0..grid {
        let x = xmin + (ix as f64 + 0.5) / grid as f64 * (xmax - xmin);
        for iy in 0..grid {
            let y = ymin + (iy as f64 + 0.5) / grid as f64 * (ymax - ymin);
            let (ia, ib) = (a.contains([x, y]), b.contains([x, y]));
            union += usize::from(ia || ib);
            sym += usize::from(ia != ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        sym as f64 / union as f64
    }
}

/// Ellipse polyline resolution used for exported ellipses.
pub const ELLIPSE_POINTS: usize = 200;

fn sample_cov_2d(xs: &[Vec<f64>]) -> ([f64; 2], Mat) {
    let n = xs.len() as f64;
    let mx = xs.iter().map(|v| v[0]).sum::<f64>() / n;
    let my = xs.iter().map(|v| v[1]).sum::<f64>() / n;
    let mut c = Mat::zeros(2, 2);
    for v in xs {
        let (a, b) = (v[0] - mx, v[1] - my);
        c[(0, 0)] += a * a;
        c[(0, 1)] += a * b;
        c[(1, 1)] += b * b;
    }
    let denom = (n - 1.0).max(1.0);
    c[(0, 0)] /= denom;
    c[(1, 1)] /= denom;
    c[(0, 1)] /= denom;
    c[(1, 0)] = c[(0, 1)];
    ([mx, my], c)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McSummary> {
    cfg.validate()?;
    let setup = prepare(cfg)?;
    run_prepared(cfg, &setup)
}

/// [`run_experiment`] followed by every scaling study listed in the config.
pub fn run_with_studies(cfg: &ExperimentConfig) -> Result<McSummary> {
    let mut summary = run_experiment(cfg)?;
    let mut base = cfg.clone();
    base.scaling.clear();
    for study in &cfg.scaling {
        summary.slopes.push(scaling_study(&base, study.axis, &study.grid)?);
    }
    Ok(summary)
}

pub fn run_prepared(cfg: &ExperimentConfig, setup: &Setup) -> Result<McSummary> {
    let signal = &setup.signal;
    let r = cfg.rank;
    if r != signal.rank() {
        return Err(Error::Parameter(format!(
            "rank {} differs from the signal rank {}; alignment needs equal ranks",
            r,
            signal.rank()
        )));
    }
    if let Some(i) = cfg.outputs.rows.iter().find(|&&i| i >= signal.n()) {
        return Err(Error::config("outputs.rows", format!("row {} out of range", i)));
    }
    let cols: Vec<usize> = if cfg.outputs.cols.is_empty() {
        (0..r).collect()
    } else {
        cfg.outputs.cols.clone()
    };
    if let Some(j) = cols.iter().find(|&&j| j >= r) {
        return Err(Error::config("outputs.cols", format!("column {} out of range", j)));
    }
    let a = if cfg.methods.contains(&Method::Oracle) {
        Some(gram(&signal.m))
    } else {
        None
    };
    let outcomes: Vec<Result<Outcome>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|t| run_replicate(cfg, setup, a.as_ref(), t))
        .collect();

    let mut ok: Vec<(usize, Outcome)> = Vec::new();
    let mut failures = Vec::new();
    for (t, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push((t, o)),
            Err(e) => failures.push(ReplicateFailure {
                replicate: t,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * cfg.replicates as f64 || ok.is_empty() {
        return Err(Error::Experiment(format!(
            "{} of {} replicates failed; first: {}",
            failures.len(),
            cfg.replicates,
            failures.first().map_or("", |f| f.message.as_str())
        )));
    }

    let tracked = &cfg.outputs.rows;
    let mut rows = Vec::new();
    for (t, o) in &ok {
        for (mi, m) in o.methods.iter().enumerate() {
            for (ri, &i) in tracked.iter().enumerate() {
                for &j in &cols {
                    rows.push(RecordedRow {
                        replicate: *t,
                        method: cfg.methods[mi],
                        row: i,
                        col: j,
                        raw: m.errors.raw[ri][j],
                        lambda_scaled: m.errors.scaled[ri][j],
                    });
                }
            }
        }
    }

    let mut ks = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (ri, &i) in tracked.iter().enumerate() {
            for &j in &cols {
                let sd = setup.law.sigma[(i, j)];
                let z: Vec<f64> = ok.iter().map(|(_, o)| o.methods[mi].errors.raw[ri][j] / sd).collect();
                let value = if z.len() >= 2 && sd > 0.0 { ks_stat(&z)? } else { f64::NAN };
                ks.push(KsEntry {
                    method,
                    row: i,
                    col: j,
                    samples: z.len(),
                    ks: value,
                });
            }
        }
    }

    let q = chi2_quantile(r, cfg.level)?;
    let mut row_cov: Vec<RowCoverage> = tracked
        .iter()
        .map(|&i| RowCoverage {
            row: i,
            covered: 0,
            total: 0,
            fraction: None,
        })
        .collect();
    let mut undefined = 0;
    for (_, o) in &ok {
        match &o.pivots {
            Some(p) => {
                for (rc, t) in row_cov.iter_mut().zip(p) {
                    rc.total += 1;
                    rc.covered += usize::from(t.iter().map(|x| x * x).sum::<f64>() <= q);
                }
            }
            None => undefined += 1,
        }
    }
    for rc in row_cov.iter_mut() {
        rc.fraction = (rc.total > 0).then(|| rc.covered as f64 / rc.total as f64);
    }
    let total: usize = row_cov.iter().map(|c| c.total).sum();
    let covered: usize = row_cov.iter().map(|c| c.covered).sum();
    let coverage = CoverageReport {
        method: cfg.methods[0],
        level: cfg.level,
        rows: row_cov,
        overall: (total > 0).then(|| covered as f64 / total as f64),
        undefined,
    };

    let k = signal.num_classes();
    let l2inf = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let per_replicate: Vec<f64> = ok.iter().map(|(_, o)| o.methods[mi].l2inf).collect();
            let mut sorted = per_replicate.clone();
            sorted.sort_by(f64::total_cmp);
            let class_row_error = (0..k)
                .map(|c| median(&ok.iter().map(|(_, o)| o.methods[mi].class_err[c]).collect::<Vec<_>>()))
                .collect();
            let class_centroid_error = (0..k)
                .map(|c| median(&ok.iter().map(|(_, o)| o.methods[mi].class_shift[c]).collect::<Vec<_>>()))
                .collect();
            MethodErrors {
                method,
                replicates: sorted.len(),
                median: quantile_sorted(&sorted, 0.5),
                q25: quantile_sorted(&sorted, 0.25),
                q75: quantile_sorted(&sorted, 0.75),
                mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
                class_row_error,
                class_centroid_error,
                per_replicate,
            }
        })
        .collect();

    let deviations = ok
        .iter()
        .flat_map(|(t, o)| {
            o.deviations.iter().enumerate().map(move |(c, d)| ClassDeviation {
                replicate: *t,
                class: c,
                deviation: *d,
            })
        })
        .collect();

    let mut ellipses = Vec::new();
    if r == 2 && ok.len() >= 3 {
        for (ri, &i) in tracked.iter().enumerate() {
            let theo = ellipse_at(&setup.law.per_class_s[signal.labels[i]], [0.0, 0.0], cfg.level, ELLIPSE_POINTS);
            let errs: Vec<Vec<f64>> = ok.iter().map(|(_, o)| o.methods[0].errors.raw[ri].clone()).collect();
            let (center, cov) = sample_cov_2d(&errs);
            let emp = ellipse_at(&cov, center, cfg.level, ELLIPSE_POINTS);
            if let (Ok(theoretical), Ok(empirical)) = (theo, emp) {
                let mismatch = ellipse_mismatch(&theoretical, &empirical, 400);
                ellipses.push(RowEllipses {
                    row: i,
                    theoretical,
                    empirical,
                    mismatch,
                });
            }
        }
    }

    let theoretical_sd = tracked
        .iter()
        .map(|&i| setup.law.sigma.row(i).to_vec())
        .collect();

    Ok(McSummary {
        replicates: cfg.replicates,
        rows,
        ks,
        coverage,
        l2inf,
        slopes: Vec::new(),
        traces: ok.iter().filter_map(|(_, o)| o.trace.clone()).collect(),
        deviations,
        ellipses,
        failures,
        diagnostics: setup.diagnostics.clone(),
        theoretical_sd,
    })
}

/// Runs an experiment with at least two methods and returns the error table.
pub fn method_comparison(cfg: &ExperimentConfig) -> Result<Vec<MethodErrors>> {
    if cfg.methods.len() < 2 {
        return Err(Error::config("methods", "a comparison needs at least two methods"));
    }
    Ok(run_experiment(cfg)?.l2inf)
}

/// What a scaling study varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleAxis {
    /// Multiplies the noise, so the grid is proportional to `σ`.
    Noise,
    /// Multiplies the signal `M`.
    Signal,
}

/// Median `ℓ2,∞` error of the first method over a grid of noise or signal
/// scales, and the log–log slope against the grid. Every grid point reuses
/// the same seeds. Points outside the Assumption 2 regime are flagged.
pub fn scaling_study(cfg: &ExperimentConfig, axis: ScaleAxis, grid: &[f64]) -> Result<SlopeFit> {
    if grid.is_empty() {
        return Err(Error::Parameter("scaling grid is empty".into()));
    }
    if grid.len() < 4 {
        return Err(Error::Parameter(format!(
            "scaling grid needs at least 4 points, got {}",
            grid.len()
        )));
    }
    if let Some(g) = grid.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::Parameter(format!("grid value {} must be positive", g)));
    }
    let mut medians = Vec::with_capacity(grid.len());
    let mut flagged = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for &g in grid {
        let mut c = cfg.clone();
        match axis {
            ScaleAxis::Noise => c.noise_scale = cfg.noise_scale * g,
            ScaleAxis::Signal => c.signal_scale = cfg.signal_scale * g,
        }
        let summary = run_experiment(&c)?;
        let inside = summary.diagnostics.passes(2);
        if !inside {
            let m = summary
                .diagnostics
                .margins
                .iter()
                .find(|m| m.assumption == 2)
                .map_or(f64::NAN, |m| m.value);
            warnings.push(format!(
                "grid point {} lies outside the signal-strength regime (margin {:.3})",
                g, m
            ));
        }
        flagged.push(!inside);
        medians.push(summary.l2inf[0].median);
    }
    let lx: Vec<f64> = grid.iter().map(|g| g.ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let slope = fit_slope(&lx, &ly)?;
    Ok(SlopeFit {
        variable: match axis {
            ScaleAxis::Noise => "noise_scale".into(),
            ScaleAxis::Signal => "signal_scale".into(),
        },
        grid: grid.to_vec(),
        medians,
        slope,
        flagged,
        warnings,
    })
}

fn csv_float(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("NaN");
    } else {
        write_float(out, v);
    }
}

impl McSummary {
    /// `replicate,method,row,col,raw,lambda_scaled`
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("replicate,method,row,col,raw,lambda_scaled\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{},", r.replicate, r.method, r.row, r.col));
            csv_float(&mut out, r.raw);
            out.push(',');
            csv_float(&mut out, r.lambda_scaled);
            out.push('\n');
        }
        out
    }

    /// `method,row,col,samples,ks`
    pub fn ks_csv(&self) -> String {
        let mut out = String::from("method,row,col,samples,ks\n");
        for k in &self.ks {
            out.push_str(&format!("{},{},{},{},", k.method, k.row, k.col, k.samples));
            csv_float(&mut out, k.ks);
            out.push('\n');
        }
        out
    }

    /// `method,replicates,median,q25,q75,mean,class_0,…,shift_0,…`
    pub fn l2inf_csv(&self) -> String {
        let k = self.l2inf.first().map_or(0, |m| m.class_row_error.len());
        let mut out = String::from("method,replicates,median,q25,q75,mean");
        for c in 0..k {
            out.push_str(&format!(",class_{}", c));
        }
        for c in 0..k {
            out.push_str(&format!(",shift_{}", c));
        }
        out.push('\n');
        for m in &self.l2inf {
            out.push_str(&format!("{},{}", m.method, m.replicates));
            let values = [m.median, m.q25, m.q75, m.mean];
            for v in values.iter().chain(&m.class_row_error).chain(&m.class_centroid_error) {
                out.push(',');
                csv_float(&mut out, *v);
            }
            out.push('\n');
        }
        out
    }

    pub fn coverage_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.coverage)?)
    }

    pub fn slopes_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.slopes)?)
    }

    /// KS entries keyed by `(method, row, col)`.
    pub fn ks_map(&self) -> BTreeMap<(Method, usize, usize), f64> {
        self.ks.iter().map(|k| ((k.method, k.row, k.col), k.ks)).collect()
    }

    pub fn method_errors(&self, method: Method) -> Option<&MethodErrors> {
        self.l2inf.iter().find(|m| m.method == method)
    }

    /// Sample variance of each recorded `Λ`-scaled column of `row` for `method`.
    pub fn scaled_variances(&self, method: Method, row: usize) -> Vec<(usize, f64)> {
        let mut by_col: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.method == method && r.row == row) {
            by_col.entry(r.col).or_default().push(r.lambda_scaled);
        }
        by_col
            .into_iter()
            .map(|(c, xs)| {
                let n = xs.len() as f64;
                let m = xs.iter().sum::<f64>() / n;
                (c, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_point_mass_and_errors() {
        assert_eq!(ks_stat(&[0.0; 10]).unwrap(), 0.5);
        assert!(matches!(ks_stat(&[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 2.5);
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [3.0f64, 12.0, 48.0].iter().map(|v| v.ln()).collect();
        assert!((fit_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn config_rejects_zero_replicates_and_unknown_keys() {
        let cfg = ExperimentConfig::from_preset(Preset::Figure2 { n: 30 }, 2, 0, 1);
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let bad = r#"{"preset": "figure1", "rank": 2, "replicates": 3, "colour": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }

    #[test]
    fn identical_ellipses_do_not_mismatch() {
        let e = ellipse_at(&Mat::from_diag(&[2.0, 1.0]), [0.0, 0.0], 0.95, 50).unwrap();
        assert_eq!(ellipse_mismatch(&e, &e, 100), 0.0);
        let f = ellipse_at(&Mat::from_diag(&[2.0, 1.0]), [10.0, 0.0], 0.95, 50).unwrap();
        assert_eq!(ellipse_mismatch(&e, &f, 100), 1.0);
    }
}
