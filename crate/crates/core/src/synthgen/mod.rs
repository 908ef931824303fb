//! Ground-truth signals and noise for subgaussian mixture experiments.
//!
//! A [`MixtureSpec`] stacks `K` class means into an `n×d` signal `M` and
//! attaches a covariance recipe to each class. Noise rows are
//! `E_i = Σ_k^{1/2} Y_i` with i.i.d. unit-variance driver entries.

mod cov;
mod preset;
pub(crate) mod rng;

pub use cov::{build_v2_theta, realize_cov, realize_sigma, CovSpec, RealizedCov};
pub use preset::{section5_means, Preset};
pub use rng::{derive_seed, replicate_seed};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::{fix_signs, matmul, matmul_tn, sym_eig, Frame, Mat, DEFAULT_EIG_TOL};
use crate::matlin::orthonormalize_rows;
use rng::{stream, TAG_NOISE_ROW};

/// Distribution of the i.i.d. entries of `Y_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDriver {
    #[default]
    Gaussian,
    Rademacher,
}

/// A `K`-class mixture: class `k` has `sizes[k]` rows equal to `means[k]`
/// and noise covariance `covs[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub d: usize,
    pub sizes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<CovSpec>,
    #[serde(default)]
    pub noise_driver: NoiseDriver,
}

impl MixtureSpec {
    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.sizes.len();
        if k == 0 {
            return Err(Error::config("sizes", "at least one class is required"));
        }
        if self.means.len() != k || self.covs.len() != k {
            return Err(Error::config(
                "means",
                format!(
                    "{} sizes, {} means and {} covs must agree",
                    k,
                    self.means.len(),
                    self.covs.len()
                ),
            ));
        }
        if self.d == 0 {
            return Err(Error::config("d", "must be >= 1"));
        }
        for (i, s) in self.sizes.iter().enumerate() {
            if *s == 0 {
                return Err(Error::config(format!("sizes[{}]", i), "class is empty"));
            }
        }
        for (i, m) in self.means.iter().enumerate() {
            if m.len() != self.d {
                return Err(Error::config(
                    format!("means[{}]", i),
                    format!("length {} but d = {}", m.len(), self.d),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("means[{}]", i), "non-finite entry"));
            }
        }
        for (i, c) in self.covs.iter().enumerate() {
            c.validate().map_err(|e| Error::config(format!("covs[{}]", i), e.to_string()))?;
        }
        Ok(())
    }

    /// Class label of every row, in order.
    pub fn labels(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect()
    }
}

/// Ground truth `M = UΛVᵀ` with the class label of each row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalModel {
    pub m: Mat,
    pub u: Frame,
    pub lambdas: Vec<f64>,
    pub v: Frame,
    pub labels: Vec<usize>,
}

impl SignalModel {
    pub fn n(&self) -> usize {
        self.m.rows()
    }

    pub fn d(&self) -> usize {
        self.m.cols()
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// `cM`, with `λ` scaled accordingly (`c > 0`).
    pub fn scaled(&self, c: f64) -> SignalModel {
        SignalModel {
            m: self.m.scale(c),
            u: self.u.clone(),
            lambdas: self.lambdas.iter().map(|l| l * c).collect(),
            v: self.v.clone(),
            labels: self.labels.clone(),
        }
    }

    /// `‖M − U diag(λ) Vᵀ‖_F`
    pub fn reconstruction_error(&self) -> f64 {
        let ul = Mat::from_fn(self.n(), self.rank(), |i, j| self.u.mat()[(i, j)] * self.lambdas[j]);
        let approx = crate::matlin::matmul_nt(&ul, self.v.mat()).expect("shapes");
        approx.sub(&self.m).expect("shapes").frobenius()
    }
}

/// Noisy observation `M̂ = M + E` of a signal.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub signal: SignalModel,
    pub e: Mat,
    pub mhat: Mat,
    pub seed: u64,
}

/// `d×m` matrix uniformly distributed on the Stiefel manifold: the Q factor
/// (positive pivots) of an i.i.d. Gaussian matrix.
pub fn sample_stiefel(d: usize, m: usize, seed: u64) -> Result<Mat> {
    if m > d || m == 0 {
        return Err(Error::Parameter(format!(
            "Stiefel dimension m = {} must satisfy 1 <= m <= d = {}",
            m, d
        )));
    }
    let mut rng = stream(seed, rng::TAG_COV_FACTOR, u64::MAX);
    // rows of `g` are the columns of the Gaussian matrix
    let mut g = Mat::from_fn(m, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_rows(&mut g);
    Ok(g.transpose())
}

pub const RANK_TOL: f64 = 1e-10;

/// Builds `M` from the class means and its thin decomposition.
///
/// With membership matrix `Z` and class-mean matrix `Mu`, `MMᵀ = Z Mu Muᵀ Zᵀ`,
/// so its nonzero eigenpairs follow from the `K×K` matrix
/// `B = D Mu Muᵀ D` with `D = diag(√n_k)`. Eigenvalues of `B` below
/// `RANK_TOL` times the largest are treated as zero.
pub fn build_signal(spec: &MixtureSpec) -> Result<SignalModel> {
    spec.validate()?;
    let k = spec.k();
    let d = spec.d;
    let n = spec.n();
    let labels = spec.labels();
    let m = Mat::from_fn(n, d, |i, j| spec.means[labels[i]][j]);

    let mu = Mat::from_rows(&spec.means)?;
    let root_sizes: Vec<f64> = spec.sizes.iter().map(|&s| (s as f64).sqrt()).collect();
    let dmu = Mat::from_fn(k, d, |i, j| root_sizes[i] * mu[(i, j)]);
    let mut b = crate::matlin::matmul_nt(&dmu, &dmu)?;
    b.symmetrize();
    let e = sym_eig(&b, DEFAULT_EIG_TOL)?;
    let top = e.values.first().cloned().unwrap_or(0.0).max(0.0);
    if top == 0.0 {
        return Err(Error::DegenerateSignal("all class means are zero".into()));
    }
    // roundoff in B sits near 1e-16·top, so compare eigenvalues of B (squared
    // singular values) well above that
    let keep: Vec<usize> = (0..k).filter(|&j| e.values[j] > RANK_TOL * top).collect();
    let r = keep.len();
    let lambdas: Vec<f64> = keep.iter().map(|&j| e.values[j].sqrt()).collect();
    let mut u = Mat::from_fn(n, r, |i, j| e.vectors[(labels[i], keep[j])] / root_sizes[labels[i]]);
    fix_signs(&mut u);
    // V = Mᵀ U Λ⁻¹
    let mut v = matmul_tn(&m, &u)?;
    for i in 0..d {
        for j in 0..r {
            v[(i, j)] /= lambdas[j];
        }
    }
    let u = Frame::new(u)?;
    let v = Frame::new(v)?;
    Ok(SignalModel {
        m,
        u,
        lambdas,
        v,
        labels,
    })
}

/// Realizes every class covariance of `spec` from `seed`.
pub fn realize_all(spec: &MixtureSpec, signal: &SignalModel, seed: u64) -> Result<Vec<RealizedCov>> {
    spec.covs
        .iter()
        .enumerate()
        .map(|(k, c)| realize_cov(c, signal, k, seed))
        .collect()
}

/// Draws `E` row by row: row `i` uses its own substream of `seed`, then is
/// multiplied by its class root.
pub fn sample_noise(
    signal: &SignalModel,
    covs: &[RealizedCov],
    driver: NoiseDriver,
    seed: u64,
) -> Result<Mat> {
    let n = signal.n();
    let d = signal.d();
    if covs.len() < signal.num_classes() {
        return Err(Error::Parameter(format!(
            "{} covariance roots for {} classes",
            covs.len(),
            signal.num_classes()
        )));
    }
    if let Some(c) = covs.iter().find(|c| c.root.rows() != d) {
        return Err(Error::Dimension(format!(
            "covariance root is {}x{} but d = {}",
            c.root.rows(),
            c.root.cols(),
            d
        )));
    }
    let mut y = Mat::zeros(n, d);
    for i in 0..n {
        let mut rng = stream(seed, TAG_NOISE_ROW, i as u64);
        let row = y.row_mut(i);
        match driver {
            NoiseDriver::Gaussian => row
                .iter_mut()
                .for_each(|x| *x = rng.sample::<f64, _>(StandardNormal)),
            NoiseDriver::Rademacher => row
                .iter_mut()
                .for_each(|x| *x = if rng.random::<bool>() { 1.0 } else { -1.0 }),
        }
    }
    let mut e = Mat::zeros(n, d);
    for (k, c) in covs.iter().enumerate() {
        let idx: Vec<usize> = (0..n).filter(|&i| signal.labels[i] == k).collect();
        if idx.is_empty() {
            continue;
        }
        let block = match c.spherical_root {
            Some(s) => y.select_rows(&idx).scale(s),
            // root is symmetric, so Y·root gives rows root·Y_i
            None => matmul(&y.select_rows(&idx), &c.root)?,
        };
        for (bi, &i) in idx.iter().enumerate() {
            e.row_mut(i).copy_from_slice(block.row(bi));
        }
    }
    Ok(e)
}

/// Signal plus sampled noise. `noise_scale` multiplies `E`.
pub fn generate_dataset(
    signal: &SignalModel,
    covs: &[RealizedCov],
    driver: NoiseDriver,
    noise_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut e = sample_noise(signal, covs, driver, seed)?;
    if noise_scale != 1.0 {
        e = e.scale(noise_scale);
    }
    let mhat = signal.m.add(&e)?;
    Ok(Dataset {
        signal: signal.clone(),
        e,
        mhat,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_rank_one() {
        let mut mean = vec![0.0; 6];
        mean[0] = 1.0;
        let spec = MixtureSpec {
            d: 6,
            sizes: vec![4],
            means: vec![mean],
            covs: vec![CovSpec::Spherical { variance: 1.0 }],
            noise_driver: NoiseDriver::Gaussian,
        };
        let s = build_signal(&spec).unwrap();
        assert_eq!(s.rank(), 1);
        assert!((s.lambdas[0] - 2.0).abs() < 1e-12);
        for i in 0..4 {
            assert!((s.u.mat()[(i, 0)] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_means_are_degenerate() {
        let spec = MixtureSpec {
            d: 3,
            sizes: vec![2],
            means: vec![vec![0.0; 3]],
            covs: vec![CovSpec::Spherical { variance: 1.0 }],
            noise_driver: NoiseDriver::Gaussian,
        };
        assert!(matches!(build_signal(&spec), Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn validation_names_fields() {
        let spec = MixtureSpec {
            d: 3,
            sizes: vec![2, 0],
            means: vec![vec![1.0; 3], vec![2.0; 3]],
            covs: vec![CovSpec::Spherical { variance: 1.0 }; 2],
            noise_driver: NoiseDriver::Gaussian,
        };
        match spec.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sizes[1]"),
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn stiefel_rejects_tall_request() {
        assert!(matches!(sample_stiefel(3, 4, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let spec = MixtureSpec {
            d: 5,
            sizes: vec![3, 2],
            means: vec![vec![1.0; 5], vec![-1.0, 2.0, 0.0, 1.0, 3.0]],
            covs: vec![CovSpec::Spherical { variance: 1.0 }; 2],
            noise_driver: NoiseDriver::Rademacher,
        };
        let s = build_signal(&spec).unwrap();
        let covs = realize_all(&spec, &s, 1).unwrap();
        let e = sample_noise(&s, &covs, NoiseDriver::Rademacher, 9).unwrap();
        assert!(e.data().iter().all(|v| *v == 1.0 || *v == -1.0));
    }
}
