//! Left singular subspace estimators built on the sample Gram matrix:
//! HeteroPCA, diagonal deletion, vanilla PCA and the idealized oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlin::{hollow, matmul_nt, top_eigenpairs, EigOrder, Frame, Mat, SymEig};

/// Settings for [`hetero_pca`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroPcaConfig {
    pub rank: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Relative max-abs diagonal change at which the iteration stops.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Eigenpair order used for the rank-r truncation of each iterate.
    #[serde(default = "default_truncation")]
    pub truncation: EigOrder,
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-8
}

fn default_truncation() -> EigOrder {
    EigOrder::Algebraic
}

impl HeteroPcaConfig {
    pub fn new(rank: usize) -> Self {
        HeteroPcaConfig {
            rank,
            max_iter: default_max_iter(),
            tol: default_tol(),
            truncation: default_truncation(),
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_truncation(mut self, order: EigOrder) -> Self {
        self.truncation = order;
        self
    }

    fn validate(&self, dim: usize) -> Result<()> {
        check_rank(self.rank, dim)?;
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// An estimated `n×r` frame together with how it was obtained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceEstimate {
    pub frame: Frame,
    /// Leading eigenvalues of the final iterate (squared singular value scale).
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-abs diagonal change at each iteration.
    pub diag_trace: Vec<f64>,
    /// Set when the r-th and (r+1)-th eigenvalues are numerically tied.
    #[serde(default)]
    pub gap_warning: bool,
}

/// Result of a HeteroPCA run including the imputed diagonal.
#[derive(Clone, Debug)]
pub struct HeteroPcaRun {
    pub estimate: SubspaceEstimate,
    pub diagonal: Vec<f64>,
}

fn check_rank(r: usize, dim: usize) -> Result<()> {
    if r == 0 || r >= dim {
        return Err(Error::Parameter(format!(
            "rank {} must satisfy 1 <= r < {}",
            r, dim
        )));
    }
    Ok(())
}

fn check_square_symmetric(a: &Mat) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(a.rows())
}

/// Sample Gram matrix `M̂M̂ᵀ`, exactly symmetric.
pub fn gram(mhat: &Mat) -> Mat {
    let mut g = matmul_nt(mhat, mhat).expect("conforming shapes");
    let n = g.rows();
    for i in 0..n {
        for j in i + 1..n {
            let v = g[(i, j)];
            g[(j, i)] = v;
        }
    }
    g
}

/// Leading eigenframe of `a` with a gap check against the next eigenvalue.
fn leading_frame(
    a: &Mat,
    r: usize,
    order: EigOrder,
    start: Option<&Mat>,
    iterations: usize,
    converged: bool,
    diag_trace: Vec<f64>,
) -> Result<SubspaceEstimate> {
    let e: SymEig = top_eigenpairs(a, r + 1, order, start)?;
    let key = |v: f64| match order {
        EigOrder::Magnitude => v.abs(),
        EigOrder::Algebraic => v,
    };
    let lead = e.values[0].abs();
    if lead == 0.0 {
        return Err(Error::DegenerateSpectrum(
            "the iterate is identically zero; no rank-r structure".into(),
        ));
    }
    let gap = key(e.values[r - 1]) - key(e.values[r]);
    let gap_warning = gap < 1e-12 * lead;
    let frame = Frame::new(e.vectors.leading_cols(r))?;
    Ok(SubspaceEstimate {
        frame,
        eigenvalues: e.values[..r].to_vec(),
        iterations,
        converged,
        diag_trace,
        gap_warning,
    })
}

/// HeteroPCA: iteratively re-imputes the diagonal of the hollowed input from
/// its rank-r truncation, leaving the off-diagonal untouched.
pub fn hetero_pca(ahat: &Mat, cfg: &HeteroPcaConfig) -> Result<SubspaceEstimate> {
    Ok(hetero_pca_observed(ahat, cfg, |_, _| {})?.estimate)
}

/// [`hetero_pca`] with a callback receiving every iterate `N_T` (including
/// the final one) before it is decomposed.
pub fn hetero_pca_observed(
    ahat: &Mat,
    cfg: &HeteroPcaConfig,
    mut observe: impl FnMut(usize, &Mat),
) -> Result<HeteroPcaRun> {
    let n = check_square_symmetric(ahat)?;
    cfg.validate(n)?;
    let r = cfg.rank;

    let mut iterate = hollow(ahat)?;
    let mut trace = Vec::new();
    let mut start: Option<Mat> = None;
    let mut converged = false;

    for t in 0..cfg.max_iter {
        observe(t, &iterate);
        let top = top_eigenpairs(&iterate, r, cfg.truncation, start.as_ref())?;
        let v = &top.vectors;
        let mut change = 0.0_f64;
        let mut scale = 0.0_f64;
        let mut next = vec![0.0; n];
        for (i, d) in next.iter_mut().enumerate() {
            *d = (0..r).map(|j| top.values[j] * v[(i, j)] * v[(i, j)]).sum();
            let cur = iterate[(i, i)];
            change = change.max((*d - cur).abs());
            scale = scale.max(cur.abs());
        }
        for (i, d) in next.into_iter().enumerate() {
            iterate[(i, i)] = d;
        }
        trace.push(change);
        start = Some(top.vectors);
        if change <= cfg.tol * (1.0 + scale) {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    observe(iterations, &iterate);
    let estimate = leading_frame(
        &iterate,
        r,
        cfg.truncation,
        start.as_ref(),
        iterations,
        converged,
        trace,
    )?;
    Ok(HeteroPcaRun {
        estimate,
        diagonal: iterate.diag(),
    })
}

/// Leading eigenvectors of the hollowed input, `Γ(Â)`.
pub fn diagonal_deletion_pca(ahat: &Mat, r: usize) -> Result<SubspaceEstimate> {
    let n = check_square_symmetric(ahat)?;
    check_rank(r, n)?;
    leading_frame(&hollow(ahat)?, r, EigOrder::Algebraic, None, 0, true, Vec::new())
}

/// Leading eigenvectors of the input as given.
pub fn vanilla_pca(ahat: &Mat, r: usize) -> Result<SubspaceEstimate> {
    let n = check_square_symmetric(ahat)?;
    check_rank(r, n)?;
    leading_frame(ahat, r, EigOrder::Algebraic, None, 0, true, Vec::new())
}

/// Leading eigenvectors of `A + Γ(Z)`; needs the noise-free `A` and so is
/// only available in simulation.
pub fn idealized_oracle(a: &Mat, z: &Mat, r: usize) -> Result<SubspaceEstimate> {
    let n = check_square_symmetric(a)?;
    if z.shape() != a.shape() {
        return Err(Error::Shape(format!(
            "A is {:?} but Z is {:?}",
            a.shape(),
            z.shape()
        )));
    }
    check_rank(r, n)?;
    let target = a.add(&hollow(z)?)?;
    leading_frame(&target, r, EigOrder::Algebraic, None, 0, true, Vec::new())
}
