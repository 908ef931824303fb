//! Named mixture configurations from the simulation study.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CovSpec, MixtureSpec, NoiseDriver};
use crate::error::{Error, Result};

/// The three class means: `μ₁ = (10,…,10,12,…,12)`, `μ₂ = (10,…,10)` and
/// `μ₃ = (5,…,5,h,…,h)`, each split at `d/2`.
pub fn section5_means(d: usize, mu3_high: f64) -> Vec<Vec<f64>> {
    let half = d / 2;
    let split = |lo: f64, hi: f64| -> Vec<f64> {
        (0..d).map(|j| if j < half { lo } else { hi }).collect()
    };
    vec![split(10.0, 12.0), split(10.0, 10.0), split(5.0, mu3_high)]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Preset {
    /// Elliptical Stiefel covariances, `n = (200, 400, 400)`, `d = 1000`.
    Figure1,
    /// Balanced spherical classes with covariances `.1I, .2I, .3I` and `n = d`.
    ///
    /// The figure caption uses `n = d = 1800` while the text describes
    /// `n = d = 1500`; 1800 is the default.
    Figure2 { n: usize },
    /// Class 1 covariance `F₁F₁ᵀ + .1I` with a square uniform factor.
    Elliptical,
    /// Class 1 covariance `VVᵀ + I`.
    SphericalReference,
    /// Class 2 covariance `5V₁V₁ᵀ + 5V₂^θ(V₂^θ)ᵀ + .1I`, `μ₃ = (5,…,5,6,…,6)`.
    Angle { theta: f64 },
}

pub const FIGURE2_DEFAULT_N: usize = 1800;

impl Preset {
    pub fn spec(&self) -> Result<MixtureSpec> {
        let sizes_fig1 = vec![200, 400, 400];
        let d_fig1 = 1000;
        let spec = match *self {
            Preset::Figure1 => MixtureSpec {
                d: d_fig1,
                sizes: sizes_fig1,
                means: section5_means(d_fig1, 5.5),
                covs: [(15.0_f64, 100), (10.0, 50), (7.5, 200)]
                    .iter()
                    .map(|&(s, m)| CovSpec::LowRankPlusIdentity {
                        scale: s * s,
                        stiefel_dim: m,
                        ridge: 1.0,
                    })
                    .collect(),
                noise_driver: NoiseDriver::Gaussian,
            },
            Preset::Figure2 { n } => {
                if n < 3 {
                    return Err(Error::Parameter(format!("figure2 needs n >= 3, got {}", n)));
                }
                let base = n / 3;
                // n not divisible by 3: the first classes absorb the remainder
                let sizes: Vec<usize> = (0..3).map(|k| base + usize::from(k < n % 3)).collect();
                MixtureSpec {
                    d: n,
                    sizes,
                    means: section5_means(n, 5.5),
                    covs: [0.1, 0.2, 0.3]
                        .iter()
                        .map(|&v| CovSpec::Spherical { variance: v })
                        .collect(),
                    noise_driver: NoiseDriver::Gaussian,
                }
            }
            Preset::Elliptical => MixtureSpec {
                d: d_fig1,
                sizes: sizes_fig1,
                means: section5_means(d_fig1, 5.5),
                covs: vec![
                    CovSpec::UniformFactorPlusRidge {
                        upper: 0.003,
                        ridge: 0.1,
                    },
                    CovSpec::UniformFactorPlusRidge {
                        upper: 0.001,
                        ridge: 1.0,
                    },
                    CovSpec::Spherical { variance: 2.0 },
                ],
                noise_driver: NoiseDriver::Gaussian,
            },
            Preset::SphericalReference => MixtureSpec {
                d: d_fig1,
                sizes: sizes_fig1,
                means: section5_means(d_fig1, 5.5),
                covs: vec![
                    CovSpec::ProjectorPlusIdentity {
                        weight: 1.0,
                        ridge: 1.0,
                    },
                    CovSpec::UniformFactorPlusRidge {
                        upper: 0.001,
                        ridge: 1.0,
                    },
                    CovSpec::Spherical { variance: 2.0 },
                ],
                noise_driver: NoiseDriver::Gaussian,
            },
            Preset::Angle { theta } => MixtureSpec {
                d: d_fig1,
                sizes: sizes_fig1,
                means: section5_means(d_fig1, 6.0),
                covs: vec![
                    CovSpec::LowRankPlusIdentity {
                        scale: 15.0,
                        stiefel_dim: 100,
                        ridge: 0.1,
                    },
                    CovSpec::SignalAngle {
                        theta,
                        weight: 5.0,
                        ridge: 0.1,
                    },
                    CovSpec::LowRankPlusIdentity {
                        scale: 10.0,
                        stiefel_dim: 200,
                        ridge: 0.1,
                    },
                ],
                noise_driver: NoiseDriver::Gaussian,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Figure1 => write!(f, "figure1"),
            Preset::Figure2 { n } => write!(f, "figure2:{}", n),
            Preset::Elliptical => write!(f, "elliptical"),
            Preset::SphericalReference => write!(f, "spherical_reference"),
            Preset::Angle { theta } => write!(f, "angle:{}", theta),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// Accepts `figure1`, `figure2`, `figure2:<n>`, `elliptical`,
    /// `spherical_reference`, `angle:<θ>` and `angle(<θ>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = if let Some(rest) = s.strip_suffix(')') {
            match rest.split_once('(') {
                Some((h, a)) => (h, Some(a)),
                None => (s, None),
            }
        } else {
            match s.split_once(':') {
                Some((h, a)) => (h, Some(a)),
                None => (s, None),
            }
        };
        let bad = || Error::Parameter(format!("unknown preset `{}`", s));
        match (head, arg) {
            ("figure1", None) => Ok(Preset::Figure1),
            ("figure2", None) => Ok(Preset::Figure2 {
                n: FIGURE2_DEFAULT_N,
            }),
            ("figure2", Some(a)) => a
                .trim()
                .parse()
                .map(|n| Preset::Figure2 { n })
                .map_err(|_| bad()),
            ("elliptical", None) => Ok(Preset::Elliptical),
            ("spherical_reference", None) => Ok(Preset::SphericalReference),
            ("angle", Some(a)) => {
                let theta: f64 = a.trim().parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::Parameter(format!("theta {} outside [0,1]", theta)));
                }
                Ok(Preset::Angle { theta })
            }
            _ => Err(bad()),
        }
    }
}

impl From<Preset> for String {
    fn from(p: Preset) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Preset {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| match e {
            Error::Parameter(message) => message,
            other => other.to_string(),
        })
    }
}
