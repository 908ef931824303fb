//! Per-class noise covariances and their symmetric square roots.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, stream, TAG_ANGLE, TAG_COV_FACTOR};
use super::{sample_stiefel, SignalModel};
use crate::error::{Error, Result};
use crate::matlin::{dot, matmul_nt, norm2, psd_sqrt, Mat, DEFAULT_CLAMP_TOL};

/// Recipe for one class covariance `Σ^(k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovSpec {
    /// `variance · I`
    Spherical { variance: f64 },
    /// `scale · FFᵀ + ridge · I` with `F` uniform on the `d×m` Stiefel manifold.
    LowRankPlusIdentity {
        scale: f64,
        stiefel_dim: usize,
        ridge: f64,
    },
    /// A fixed PSD matrix.
    Explicit { matrix: Mat },
    /// `weight · VVᵀ + ridge · I` using the signal's right singular vectors.
    ProjectorPlusIdentity {
        #[serde(default = "one")]
        weight: f64,
        #[serde(default = "one")]
        ridge: f64,
    },
    /// `FFᵀ + ridge · I` with `F` square and entries i.i.d. uniform on `[0, upper]`.
    UniformFactorPlusRidge { upper: f64, ridge: f64 },
    /// `weight · (V₁V₁ᵀ + wwᵀ) + ridge · I` where `w ⟂ V₁` and `⟨w, V₂⟩ = theta`.
    SignalAngle { theta: f64, weight: f64, ridge: f64 },
}

fn one() -> f64 {
    1.0
}

impl CovSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{} must be >= 0, got {}", name, v)))
            }
        };
        match self {
            CovSpec::Spherical { variance } => nonneg("variance", *variance),
            CovSpec::LowRankPlusIdentity {
                scale,
                stiefel_dim,
                ridge,
            } => {
                nonneg("scale", *scale)?;
                nonneg("ridge", *ridge)?;
                if *stiefel_dim == 0 {
                    return Err(Error::Parameter("stiefel_dim must be >= 1".into()));
                }
                Ok(())
            }
            CovSpec::Explicit { matrix } => {
                if !matrix.is_square() {
                    return Err(Error::Dimension("explicit covariance must be square".into()));
                }
                Ok(())
            }
            CovSpec::ProjectorPlusIdentity { weight, ridge } => {
                nonneg("weight", *weight)?;
                nonneg("ridge", *ridge)
            }
            CovSpec::UniformFactorPlusRidge { upper, ridge } => {
                nonneg("upper", *upper)?;
                nonneg("ridge", *ridge)
            }
            CovSpec::SignalAngle {
                theta,
                weight,
                ridge,
            } => {
                if !(0.0..=1.0).contains(theta) {
                    return Err(Error::Parameter(format!("theta must lie in [0,1], got {}", theta)));
                }
                nonneg("weight", *weight)?;
                nonneg("ridge", *ridge)
            }
        }
    }
}

/// A realized covariance and its symmetric PSD root.
#[derive(Clone, Debug)]
pub struct RealizedCov {
    pub sigma: Mat,
    pub root: Mat,
    /// `Some(s)` when `root = s · I`.
    pub spherical_root: Option<f64>,
}

impl RealizedCov {
    /// Largest eigenvalue of `Σ` (its spectral norm).
    pub fn spectral_norm(&self) -> Result<f64> {
        if let Some(s) = self.spherical_root {
            return Ok(s * s);
        }
        let e = crate::matlin::top_eigenpairs(&self.sigma, 1, crate::matlin::EigOrder::Algebraic, None)?;
        Ok(e.values[0].max(0.0))
    }

    /// Covariance of `s·E_i`.
    pub fn scaled(&self, s: f64) -> RealizedCov {
        RealizedCov {
            sigma: self.sigma.scale(s * s),
            root: self.root.scale(s),
            spherical_root: self.spherical_root.map(|r| r * s),
        }
    }
}

/// `a · PPᵀ + b · I` for `P` with orthonormal columns; also returns the root
/// `(√(a+b) − √b) PPᵀ + √b I`.
fn projector_plus_ridge(p: &Mat, weight: f64, ridge: f64) -> Result<RealizedCov> {
    let d = p.rows();
    let ppt = matmul_nt(p, p)?;
    let root_gain = (weight + ridge).sqrt() - ridge.sqrt();
    let sr = ridge.sqrt();
    let mut sigma = ppt.scale(weight);
    let mut root = ppt.scale(root_gain);
    for i in 0..d {
        sigma[(i, i)] += ridge;
        root[(i, i)] += sr;
    }
    sigma.symmetrize();
    root.symmetrize();
    Ok(RealizedCov {
        sigma,
        root,
        spherical_root: None,
    })
}

/// Realizes class `k`'s covariance. Random factors are drawn from streams
/// keyed by `seed` and `k`.
pub fn realize_cov(spec: &CovSpec, signal: &SignalModel, k: usize, seed: u64) -> Result<RealizedCov> {
    match realize(spec, signal, k, seed)? {
        Realized::Full(c) => Ok(c),
        Realized::NeedsRoot(sigma) => {
            let root = psd_sqrt(&sigma, DEFAULT_CLAMP_TOL)?;
            Ok(RealizedCov {
                sigma,
                root,
                spherical_root: None,
            })
        }
    }
}

/// Class `k`'s covariance matrix alone, skipping the square root.
pub fn realize_sigma(spec: &CovSpec, signal: &SignalModel, k: usize, seed: u64) -> Result<Mat> {
    Ok(match realize(spec, signal, k, seed)? {
        Realized::Full(c) => c.sigma,
        Realized::NeedsRoot(sigma) => sigma,
    })
}

enum Realized {
    Full(RealizedCov),
    NeedsRoot(Mat),
}

fn realize(spec: &CovSpec, signal: &SignalModel, k: usize, seed: u64) -> Result<Realized> {
    spec.validate()?;
    let d = signal.d();
    match spec {
        CovSpec::Spherical { variance } => {
            let s = variance.sqrt();
            Ok(Realized::Full(RealizedCov {
                sigma: Mat::identity(d).scale(*variance),
                root: Mat::identity(d).scale(s),
                spherical_root: Some(s),
            }))
        }
        CovSpec::LowRankPlusIdentity {
            scale,
            stiefel_dim,
            ridge,
        } => {
            let f = sample_stiefel(d, *stiefel_dim, derive_seed(seed, TAG_COV_FACTOR, k as u64))?;
            projector_plus_ridge(&f, *scale, *ridge).map(Realized::Full)
        }
        CovSpec::Explicit { matrix } => {
            if matrix.rows() != d {
                return Err(Error::Dimension(format!(
                    "explicit covariance is {}x{} but d = {}",
                    matrix.rows(),
                    matrix.cols(),
                    d
                )));
            }
            let mut sigma = matrix.clone();
            sigma.symmetrize();
            Ok(Realized::NeedsRoot(sigma))
        }
        CovSpec::ProjectorPlusIdentity { weight, ridge } => {
            projector_plus_ridge(signal.v.mat(), *weight, *ridge).map(Realized::Full)
        }
        CovSpec::UniformFactorPlusRidge { upper, ridge } => {
            let mut rng = stream(seed, TAG_COV_FACTOR, k as u64);
            let f = Mat::from_fn(d, d, |_, _| rng.random::<f64>() * upper);
            let mut sigma = matmul_nt(&f, &f)?;
            for i in 0..d {
                sigma[(i, i)] += ridge;
            }
            sigma.symmetrize();
            Ok(Realized::NeedsRoot(sigma))
        }
        CovSpec::SignalAngle {
            theta,
            weight,
            ridge,
        } => {
            let w = build_v2_theta(signal, *theta, seed)?;
            let v1 = signal.v.mat().col(0);
            let p = Mat::from_columns(&[v1, w])?;
            projector_plus_ridge(&p, *weight, *ridge).map(Realized::Full)
        }
    }
}

/// Unit vector `w` with `⟨w, V₁⟩ = 0` and `⟨w, V₂⟩ = theta`:
/// `w = θ V₂ + √(1−θ²) q`, `q` a seeded random unit vector orthogonal to `V₁, V₂`.
pub fn build_v2_theta(signal: &SignalModel, theta: f64, seed: u64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!("theta must lie in [0,1], got {}", theta)));
    }
    let d = signal.d();
    if signal.rank() < 2 || d < 3 {
        return Err(Error::Parameter(format!(
            "need rank >= 2 and d >= 3 (rank {}, d {})",
            signal.rank(),
            d
        )));
    }
    let v1 = signal.v.mat().col(0);
    let v2 = signal.v.mat().col(1);
    let mut rng = stream(seed, TAG_ANGLE, 0);
    let mut q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..2 {
        for b in [&v1, &v2] {
            let c = dot(&q, b);
            q.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= c * y);
        }
    }
    let nq = norm2(&q);
    q.iter_mut().for_each(|x| *x /= nq);
    let s = (1.0 - theta * theta).max(0.0).sqrt();
    Ok(v2.iter().zip(&q).map(|(a, b)| theta * a + s * b).collect())
}
