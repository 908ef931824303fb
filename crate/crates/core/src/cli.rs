//! File-based workflows behind the `heterospectra` binary.
//!
//! Every command takes a JSON config of the form
//!
//! ```json
//! {
//!   "preset": "figure2:800",          // or "spec": { MixtureSpec }
//!   "rank": 2,
//!   "replicates": 500,
//!   "seed": 7,
//!   "methods": ["hetero", "deletion"],
//!   "outputs": { "rows": [0], "cols": [0, 1] },
//!   "level": 0.95
//! }
//! ```
//!
//! Optional keys are `noise_scale`, `signal_scale`, `thetas` (angle study)
//! and `scaling` (a list of `{ "axis": "noise" | "signal", "grid": [...] }`).
//! Unknown keys are rejected. A MixtureSpec looks like
//!
//! ```json
//! { "d": 4, "sizes": [2, 2], "means": [[1,0,0,0],[0,1,0,0]],
//!   "covs": [{ "kind": "spherical", "variance": 0.1 },
//!            { "kind": "low_rank_plus_identity", "scale": 4, "stiefel_dim": 2, "ridge": 1 }],
//!   "noise_driver": "gaussian" }
//! ```
//!
//! The seed is taken from `--seed`, then the config, then `HETEROSPECTRA_SEED`,
//! then 0.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{diagonal_deletion_pca, gram, hetero_pca, vanilla_pca, HeteroPcaConfig};
use crate::inference::Diagnostics;
use crate::matlin::{procrustes, sin_theta, two_inf_norm, matmul, Frame, Mat};
use crate::mcharness::{prepare, run_with_studies, ExperimentConfig, McSummary, Method};
use crate::synthgen::{generate_dataset, MixtureSpec, Preset};

pub const SEED_ENV: &str = "HETEROSPECTRA_SEED";

#[derive(Debug, Parser)]
#[command(name = "heterospectra", version, about = "Heteroskedastic PCA, entrywise inference and mixture simulations")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one dataset and write Mhat.csv, truth.json and manifest.json.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the left singular subspace of a data matrix.
    Estimate {
        /// Mhat.csv or a directory containing it.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value = "hetero")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment.
    Mc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print assumption diagnostics as JSON.
    Diagnose {
        /// Config file, MixtureSpec file, dataset directory, truth.json or preset name.
        input: String,
        /// Uhat.csv (or its directory) to compare against the truth.
        #[arg(long)]
        estimate: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write diagnostics.json and manifest.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Record of one command invocation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

/// Ground truth sidecar written next to `Mhat.csv`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Truth {
    pub u: Frame,
    pub lambdas: Vec<f64>,
    pub v: Frame,
    pub labels: Vec<usize>,
    pub seed: u64,
    pub spec: MixtureSpec,
    pub noise_scale: f64,
    pub signal_scale: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub gap_warning: bool,
    pub diag_trace: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateError {
    pub sin_theta: f64,
    /// `None` when the estimate cannot be aligned (rank-deficient overlap).
    pub two_inf: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub diagnostics: Diagnostics,
    /// Pass/fail per assumption number.
    pub assumptions: std::collections::BTreeMap<String, bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_error: Option<EstimateError>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{:02x}", b)).collect()
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(SEED_ENV, format!("`{}` is not an unsigned integer", v))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    Ok(match (flag, config) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => env_seed()?.unwrap_or(0),
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", path.display(), e)))
    })
}

/// Parses a JSON document, reporting schema violations with their field path.
fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Error::Parse(inner.to_string())
        } else {
            Error::config(if path == "." { String::new() } else { path }, inner.to_string())
        }
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_json(&read(path)?)
}

fn write_file(out: &Path, name: &str, contents: &str, written: &mut Vec<String>) -> Result<()> {
    let p = out.join(name);
    fs::write(&p, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", p.display(), e)))
    })?;
    written.push(name.to_string());
    Ok(())
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {}", out.display(), e)))
    })
}

fn finish_manifest(
    out: &Path,
    command: &str,
    hash: String,
    seed: u64,
    mut outputs: Vec<String>,
    started: (u64, Instant),
) -> Result<RunManifest> {
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: command.into(),
        config_hash: hash,
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        started_unix: started.0,
        wall_clock_seconds: started.1.elapsed().as_secs_f64(),
    };
    let mut ignored = Vec::new();
    write_file(out, "manifest.json", &serde_json::to_string_pretty(&manifest)?, &mut ignored)?;
    Ok(manifest)
}

fn now() -> (u64, Instant) {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    (unix, Instant::now())
}

pub fn cmd_generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<RunManifest> {
    let started = now();
    let mut cfg = load_config(config)?;
    cfg.seed = Some(resolve_seed(seed, cfg.seed)?);
    let setup = prepare(&cfg)?;
    let seed = cfg.base_seed();
    let data = generate_dataset(&setup.signal, &setup.covs, setup.spec.noise_driver, 1.0, seed)?;
    create_dir(out)?;
    let mut written = Vec::new();
    write_file(out, "Mhat.csv", &data.mhat.to_csv_string(), &mut written)?;
    let truth = Truth {
        u: setup.signal.u.clone(),
        lambdas: setup.signal.lambdas.clone(),
        v: setup.signal.v.clone(),
        labels: setup.signal.labels.clone(),
        seed,
        spec: setup.spec.clone(),
        noise_scale: cfg.noise_scale,
        signal_scale: cfg.signal_scale,
    };
    write_file(out, "truth.json", &serde_json::to_string(&truth)?, &mut written)?;
    let hash = sha256_hex(serde_json::to_string(&cfg)?.as_bytes());
    finish_manifest(out, "generate", hash, seed, written, started)
}

fn data_file(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}

pub fn cmd_estimate(data: &Path, rank: usize, method: &str, out: &Path) -> Result<RunManifest> {
    let started = now();
    let method: Method = method.parse()?;
    let mhat = Mat::from_csv_str(&read(&data_file(data, "Mhat.csv"))?)?;
    let n = mhat.rows();
    if rank == 0 || rank >= n {
        return Err(Error::Parameter(format!("rank {} must satisfy 1 <= r < n = {}", rank, n)));
    }
    let ahat = gram(&mhat);
    let est = match method {
        Method::Hetero => hetero_pca(&ahat, &HeteroPcaConfig::new(rank))?,
        Method::Deletion => diagonal_deletion_pca(&ahat, rank)?,
        Method::Vanilla => vanilla_pca(&ahat, rank)?,
        Method::Oracle => {
            return Err(Error::Parameter(
                "the oracle needs the noise-free signal and is only available in `mc`".into(),
            ))
        }
    };
    create_dir(out)?;
    let mut written = Vec::new();
    write_file(out, "Uhat.csv", &est.frame.mat().to_csv_string(), &mut written)?;
    let report = EstimateReport {
        method,
        rank,
        eigenvalues: est.eigenvalues.clone(),
        iterations: est.iterations,
        converged: est.converged,
        gap_warning: est.gap_warning,
        diag_trace: est.diag_trace.clone(),
    };
    write_file(out, "estimate.json", &serde_json::to_string_pretty(&report)?, &mut written)?;
    let hash = sha256_hex(format!("estimate:{}:{}:{}", data.display(), rank, method).as_bytes());
    finish_manifest(out, "estimate", hash, 0, written, started)
}

fn write_summary(out: &Path, summary: &McSummary, written: &mut Vec<String>) -> Result<()> {
    create_dir(out)?;
    write_file(out, "rows.csv", &summary.rows_csv(), written)?;
    write_file(out, "ks.csv", &summary.ks_csv(), written)?;
    write_file(out, "coverage.json", &summary.coverage_json()?, written)?;
    write_file(out, "l2inf.csv", &summary.l2inf_csv(), written)?;
    write_file(out, "slopes.json", &summary.slopes_json()?, written)?;
    let single = summary.ellipses.len() == 1;
    for e in &summary.ellipses {
        let suffix = if single { String::new() } else { format!("_row{}", e.row) };
        write_file(out, &format!("ellipse_theoretical{}.csv", suffix), &e.theoretical.to_csv_string(), written)?;
        write_file(out, &format!("ellipse_empirical{}.csv", suffix), &e.empirical.to_csv_string(), written)?;
    }
    write_file(out, "summary.json", &serde_json::to_string_pretty(summary)?, written)?;
    Ok(())
}

pub fn cmd_mc(config: &Path, out: &Path, seed: Option<u64>) -> Result<RunManifest> {
    let started = now();
    let mut cfg = load_config(config)?;
    cfg.seed = Some(resolve_seed(seed, cfg.seed)?);
    cfg.validate()?;
    let hash = sha256_hex(serde_json::to_string(&cfg)?.as_bytes());
    create_dir(out)?;
    let mut written = Vec::new();
    if cfg.thetas.is_some() {
        for (theta, c) in cfg.angle_configs()? {
            let dir = format!("theta_{}", theta);
            let summary = run_with_studies(&c)?;
            let mut local = Vec::new();
            write_summary(&out.join(&dir), &summary, &mut local)?;
            written.extend(local.into_iter().map(|f| format!("{}/{}", dir, f)));
        }
    } else {
        let summary = run_with_studies(&cfg)?;
        write_summary(out, &summary, &mut written)?;
    }
    finish_manifest(out, "mc", hash, cfg.base_seed(), written, started)
}

/// Where diagnostics get their model from.
enum DiagnoseSource {
    Config(ExperimentConfig),
    Truth(Truth),
}

fn diagnose_source(input: &str) -> Result<DiagnoseSource> {
    let path = Path::new(input);
    if !path.exists() {
        if let Ok(p) = input.parse::<Preset>() {
            return Ok(DiagnoseSource::Config(ExperimentConfig::from_preset(p, 0, 0, 0)));
        }
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file, directory or preset", input),
        )));
    }
    let file = data_file(path, "truth.json");
    let text = read(&file)?;
    let value: serde_json::Value = parse_json(&text)?;
    let has = |k: &str| value.get(k).is_some();
    if has("u") && has("labels") {
        Ok(DiagnoseSource::Truth(parse_json(&text)?))
    } else if has("spec") || has("preset") {
        Ok(DiagnoseSource::Config(parse_json(&text)?))
    } else {
        let spec: MixtureSpec = parse_json(&text)?;
        Ok(DiagnoseSource::Config(ExperimentConfig::from_spec(spec, 0, 0, 0)))
    }
}

pub fn cmd_diagnose(
    input: &str,
    estimate: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<DiagnoseReport> {
    let started = now();
    let mut cfg = match diagnose_source(input)? {
        DiagnoseSource::Config(c) => c,
        DiagnoseSource::Truth(t) => {
            let mut c = ExperimentConfig::from_spec(t.spec, 0, 0, t.seed);
            c.noise_scale = t.noise_scale;
            c.signal_scale = t.signal_scale;
            c
        }
    };
    cfg.seed = Some(resolve_seed(seed, cfg.seed)?);
    let setup = prepare(&cfg)?;
    let diagnostics = setup.diagnostics.clone();
    let assumptions = (2u8..=5)
        .map(|a| (a.to_string(), diagnostics.passes(a)))
        .collect();
    let estimate_error = match estimate {
        Some(p) => {
            let u_hat = Frame::new(Mat::from_csv_str(&read(&data_file(p, "Uhat.csv"))?)?)?;
            let u = &setup.signal.u;
            if u_hat.n() != u.n() || u_hat.r() != u.r() {
                return Err(Error::Shape(format!(
                    "estimate is {}x{} but the truth is {}x{}",
                    u_hat.n(),
                    u_hat.r(),
                    u.n(),
                    u.r()
                )));
            }
            let two_inf = match procrustes(&u_hat, u) {
                Ok(o) => Some(two_inf_norm(&matmul(u_hat.mat(), &o)?.sub(u.mat())?)),
                Err(Error::DegenerateAlignment(_)) => None,
                Err(e) => return Err(e),
            };
            Some(EstimateError {
                sin_theta: sin_theta(&u_hat, u)?,
                two_inf,
            })
        }
        None => None,
    };
    let report = DiagnoseReport {
        diagnostics,
        assumptions,
        estimate_error,
    };
    if let Some(out) = out {
        create_dir(out)?;
        let mut written = Vec::new();
        write_file(out, "diagnostics.json", &serde_json::to_string_pretty(&report)?, &mut written)?;
        let hash = sha256_hex(serde_json::to_string(&cfg)?.as_bytes());
        finish_manifest(out, "diagnose", hash, cfg.base_seed(), written, started)?;
    }
    Ok(report)
}

/// Runs a parsed command line on a pool of `--threads` workers.
pub fn run(cli: Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Parameter("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {}", e)))?;
    pool.install(|| match cli.command {
        Command::Generate { config, out, seed } => cmd_generate(&config, &out, seed).map(|_| ()),
        Command::Estimate {
            data,
            rank,
            method,
            out,
        } => cmd_estimate(&data, rank, &method, &out).map(|_| ()),
        Command::Mc { config, out, seed } => cmd_mc(&config, &out, seed).map(|_| ()),
        Command::Diagnose {
            input,
            estimate,
            seed,
            out,
        } => {
            let report = cmd_diagnose(&input, estimate.as_deref(), seed, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    })
}
