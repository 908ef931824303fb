//! Orthonormal frames and the subspace metrics defined on them.

use serde::{Deserialize, Serialize};

use super::eig::{sym_eig, DEFAULT_EIG_TOL};
use super::mat::{matmul, matmul_nt, matmul_tn, Mat};
use super::partial::orthonormalize_rows;
use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-10;

/// An `n×r` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat", into = "Mat")]
pub struct Frame {
    cols: Mat,
}

impl TryFrom<Mat> for Frame {
    type Error = Error;

    fn try_from(m: Mat) -> Result<Self> {
        Frame::new(m)
    }
}

impl From<Frame> for Mat {
    fn from(f: Frame) -> Mat {
        f.cols
    }
}

impl Frame {
    /// Wraps `cols`, checking `colsᵀ·cols = I` within 1e-10.
    pub fn new(cols: Mat) -> Result<Self> {
        if cols.cols() == 0 || cols.cols() > cols.rows() {
            return Err(Error::Shape(format!(
                "a frame needs 1 <= r <= n, got {}x{}",
                cols.rows(),
                cols.cols()
            )));
        }
        let err = orthonormality_error(&cols);
        if err > ORTHO_TOL {
            return Err(Error::Shape(format!(
                "columns are not orthonormal (max deviation {:.3e})",
                err
            )));
        }
        Ok(Frame { cols })
    }

    /// Orthonormalizes the columns of `m` (Gram–Schmidt, in column order).
    pub fn orthonormalize(m: &Mat) -> Result<Self> {
        let mut t = m.transpose();
        orthonormalize_rows(&mut t);
        Frame::new(t.transpose())
    }

    pub fn n(&self) -> usize {
        self.cols.rows()
    }

    pub fn r(&self) -> usize {
        self.cols.cols()
    }

    pub fn mat(&self) -> &Mat {
        &self.cols
    }

    pub fn into_mat(self) -> Mat {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.cols.row(i)
    }

    /// `self · o` for an orthogonal `r×r` matrix `o`.
    pub fn rotate(&self, o: &Mat) -> Result<Frame> {
        Frame::new(matmul(&self.cols, o)?)
    }

    /// Applies a row permutation: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Frame {
        Frame {
            cols: self.cols.select_rows(perm),
        }
    }
}

fn orthonormality_error(m: &Mat) -> f64 {
    let g = matmul_tn(m, m).expect("square Gram");
    let mut worst = 0.0_f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

fn check_pair(a: &Frame, b: &Frame) -> Result<()> {
    if a.n() != b.n() || a.r() != b.r() {
        return Err(Error::Shape(format!(
            "frames {}x{} and {}x{} differ",
            a.n(),
            a.r(),
            b.n(),
            b.r()
        )));
    }
    Ok(())
}

/// The orthogonal `O` minimizing `‖Û·O − U‖_F`.
///
/// With `ÛᵀU = W₁DW₂ᵀ`, returns `W₁W₂ᵀ`. The small SVD is assembled from the
/// eigendecomposition of `(ÛᵀU)ᵀ(ÛᵀU)`.
pub fn procrustes(uhat: &Frame, u: &Frame) -> Result<Mat> {
    check_pair(uhat, u)?;
    let c = matmul_tn(uhat.mat(), u.mat())?;
    polar_factor(&c)
}

/// Orthogonal polar factor of a square matrix.
pub(crate) fn polar_factor(c: &Mat) -> Result<Mat> {
    let r = c.rows();
    let mut ctc = matmul_tn(c, c)?;
    ctc.symmetrize();
    let e = sym_eig(&ctc, DEFAULT_EIG_TOL)?;
    let smin = e
        .values
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.max(0.0).sqrt()));
    if smin < 1e-12 {
        return Err(Error::DegenerateAlignment(smin));
    }
    // W₁ = C W₂ D⁻¹, so W₁W₂ᵀ = C W₂ D⁻¹ W₂ᵀ = C (CᵀC)^{-1/2}
    let w2 = &e.vectors;
    let inv_root = Mat::from_fn(r, r, |i, j| {
        (0..r)
            .map(|t| w2[(i, t)] * w2[(j, t)] / e.values[t].sqrt())
            .sum()
    });
    let mut o = matmul(c, &inv_root)?;
    // one Newton–Schulz step cleans up rounding: O ← O(3I − OᵀO)/2
    let oto = matmul_tn(&o, &o)?;
    let corr = Mat::from_fn(r, r, |i, j| {
        0.5 * ((if i == j { 3.0 } else { 0.0 }) - oto[(i, j)])
    });
    o = matmul(&o, &corr)?;
    Ok(o)
}

/// `‖U₁U₁ᵀ − U₂U₂ᵀ‖`, the sine of the largest principal angle.
///
/// The difference of projectors vanishes outside `span(U₁, U₂)`, so its
/// largest `|eigenvalue|` is computed on an orthonormal basis of that span.
pub fn sin_theta(u1: &Frame, u2: &Frame) -> Result<f64> {
    check_pair(u1, u2)?;
    let n = u1.n();
    let r = u1.r();
    let m = (2 * r).min(n);
    // rows of `basis` span the columns of [U₁ U₂]
    let mut basis = Mat::zeros(m, n);
    for j in 0..m {
        for i in 0..n {
            basis[(j, i)] = if j < r {
                u1.mat()[(i, j)]
            } else {
                u2.mat()[(i, j - r)]
            };
        }
    }
    orthonormalize_rows(&mut basis);
    let b1 = matmul(&basis, u1.mat())?;
    let b2 = matmul(&basis, u2.mat())?;
    let mut diff = matmul_nt(&b1, &b1)?.sub(&matmul_nt(&b2, &b2)?)?;
    diff.symmetrize();
    let e = sym_eig(&diff, DEFAULT_EIG_TOL)?;
    let s = e.values.first().map_or(0.0, |v| v.abs());
    Ok(s.clamp(0.0, 1.0))
}

/// Largest Euclidean row norm.
pub fn two_inf_norm(a: &Mat) -> f64 {
    (0..a.rows())
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `max(‖U‖₂,∞·√(n/r), ‖V‖₂,∞·√(d/r))`
pub fn incoherence_mu0(u: &Frame, v: &Frame) -> Result<f64> {
    if u.r() != v.r() {
        return Err(Error::Shape(format!(
            "U has rank {} but V has rank {}",
            u.r(),
            v.r()
        )));
    }
    let r = u.r() as f64;
    let a = two_inf_norm(u.mat()) * (u.n() as f64 / r).sqrt();
    let b = two_inf_norm(v.mat()) * (v.n() as f64 / r).sqrt();
    Ok(a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_non_orthonormal() {
        assert!(Frame::new(Mat::from_rows(&[vec![1.0], vec![1.0]]).unwrap()).is_err());
        assert!(Frame::new(Mat::zeros(2, 3)).is_err());
        assert!(Frame::new(Mat::identity(3).leading_cols(2)).is_ok());
    }

    #[test]
    fn two_inf_examples() {
        assert_eq!(two_inf_norm(&Mat::identity(3)), 1.0);
        let a = Mat::from_rows(&[vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(two_inf_norm(&a), 5.0);
    }

    #[test]
    fn sin_theta_extremes() {
        let e1 = Frame::new(Mat::from_rows(&[vec![1.0], vec![0.0]]).unwrap()).unwrap();
        let e2 = Frame::new(Mat::from_rows(&[vec![0.0], vec![1.0]]).unwrap()).unwrap();
        assert_eq!(sin_theta(&e1, &e1).unwrap(), 0.0);
        assert!((sin_theta(&e1, &e2).unwrap() - 1.0).abs() < 1e-15);
        let f3 = Frame::new(Mat::identity(3).leading_cols(1)).unwrap();
        assert!(matches!(sin_theta(&e1, &f3), Err(Error::Shape(_))));
    }

    #[test]
    fn procrustes_identity_and_degenerate() {
        let u = Frame::new(Mat::identity(4).leading_cols(2)).unwrap();
        let o = procrustes(&u, &u).unwrap();
        assert!(o.sub(&Mat::identity(2)).unwrap().max_abs() < 1e-14);
        let w = Frame::new(Mat::from_fn(4, 2, |i, j| if i == j + 2 { 1.0 } else { 0.0 })).unwrap();
        assert!(matches!(
            procrustes(&w, &u),
            Err(Error::DegenerateAlignment(_))
        ));
    }

    #[test]
    fn mu0_flat_and_spiky() {
        // normalized Hadamard columns are perfectly flat
        let h = Mat::from_rows(&[
            vec![0.5, 0.5],
            vec![0.5, -0.5],
            vec![0.5, 0.5],
            vec![0.5, -0.5],
        ])
        .unwrap();
        let u = Frame::new(h.clone()).unwrap();
        assert!((incoherence_mu0(&u, &u).unwrap() - 1.0).abs() < 1e-10);
        let spiky = Frame::new(Mat::identity(4).leading_cols(2)).unwrap();
        assert!(incoherence_mu0(&spiky, &u).unwrap() >= (4.0f64 / 2.0).sqrt() - 1e-12);
        let v1 = Frame::new(Mat::identity(4).leading_cols(1)).unwrap();
        assert!(incoherence_mu0(&u, &v1).is_err());
    }
}
