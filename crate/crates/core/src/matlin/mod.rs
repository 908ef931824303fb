//! Dense matrix primitives: eigendecomposition, truncation, PSD roots,
//! Procrustes alignment and the subspace norms used throughout the crate.

mod eig;
mod frame;
mod mat;
mod partial;

pub use eig::{fix_signs, sym_eig, EigOrder, SymEig, DEFAULT_EIG_TOL};
pub use frame::{incoherence_mu0, procrustes, sin_theta, two_inf_norm, Frame};
pub use mat::{dot, matmul, matmul_nt, matmul_tn, norm2, write_float, Mat};
pub use partial::{top_eigenpairs, DENSE_CUTOFF};

pub(crate) use partial::orthonormalize_rows;

use crate::error::{Error, Result};

/// Default relative tolerance below which negative eigenvalues are clamped to zero.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-10;

fn require_square(a: &Mat) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(a.rows())
}

/// Γ(A): `A` with its diagonal zeroed.
pub fn hollow(a: &Mat) -> Result<Mat> {
    let n = require_square(a)?;
    let mut out = a.clone();
    for i in 0..n {
        out[(i, i)] = 0.0;
    }
    Ok(out)
}

/// G(A) = A − Γ(A): the diagonal part of `A`.
pub fn diag_part(a: &Mat) -> Result<Mat> {
    require_square(a)?;
    Ok(Mat::from_diag(&a.diag()))
}

/// Best rank-`r` approximation of symmetric `a`: the `r` eigenpairs of
/// largest `|λ|`, signs retained.
pub fn best_rank_r(a: &Mat, r: usize) -> Result<Mat> {
    best_rank_r_ordered(a, r, EigOrder::Magnitude)
}

/// Rank-`r` truncation keeping the leading eigenpairs in `order`.
pub fn best_rank_r_ordered(a: &Mat, r: usize, order: EigOrder) -> Result<Mat> {
    let n = require_square(a)?;
    if r == 0 || r > n {
        return Err(Error::Parameter(format!(
            "rank {} out of range 1..={}",
            r, n
        )));
    }
    Ok(top_eigenpairs(a, r, order, None)?.reconstruct())
}

/// Symmetric PSD square root. Eigenvalues in `[−clamp_tol·λ_max, 0)` are
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(s: &Mat, clamp_tol: f64) -> Result<Mat> {
    let e = psd_eig(s, clamp_tol)?;
    Ok(spectral_map(&e, |v| v.sqrt()))
}

/// Pseudo-inverse square root of a PSD matrix; eigenvalues at or below
/// `floor·λ_max` map to zero.
pub fn psd_inv_sqrt(s: &Mat, floor: f64) -> Result<Mat> {
    let e = psd_eig(s, DEFAULT_CLAMP_TOL)?;
    let top = e.values.iter().cloned().fold(0.0, f64::max);
    Ok(spectral_map(&e, |v| {
        if v > floor * top {
            1.0 / v.sqrt()
        } else {
            0.0
        }
    }))
}

/// Eigendecomposition with eigenvalues clamped into `[0, ∞)`.
pub(crate) fn psd_eig(s: &Mat, clamp_tol: f64) -> Result<SymEig> {
    require_square(s)?;
    if !(clamp_tol >= 0.0) {
        return Err(Error::Parameter(format!(
            "clamp tolerance must be nonnegative, got {}",
            clamp_tol
        )));
    }
    let mut e = sym_eig(s, DEFAULT_EIG_TOL)?;
    let top = e.values.iter().cloned().fold(0.0, f64::max);
    let window = clamp_tol * top.max(1.0);
    for v in e.values.iter_mut() {
        if *v < 0.0 {
            if *v < -window {
                return Err(Error::NotPsd { eigenvalue: *v });
            }
            *v = 0.0;
        }
    }
    Ok(e)
}

/// `V f(Λ) Vᵀ`
pub(crate) fn spectral_map(e: &SymEig, f: impl Fn(f64) -> f64) -> Mat {
    let mapped = SymEig {
        values: e.values.iter().map(|&v| f(v)).collect(),
        vectors: e.vectors.clone(),
    };
    mapped.reconstruct()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hollow_and_diag_examples() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(
            hollow(&a).unwrap(),
            Mat::from_rows(&[vec![0.0, 2.0], vec![3.0, 0.0]]).unwrap()
        );
        assert_eq!(
            diag_part(&a).unwrap(),
            Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 4.0]]).unwrap()
        );
        assert_eq!(hollow(&Mat::identity(3)).unwrap(), Mat::zeros(3, 3));
        assert_eq!(diag_part(&Mat::zeros(4, 4)).unwrap(), Mat::zeros(4, 4));
        assert!(matches!(hollow(&Mat::zeros(2, 3)), Err(Error::Dimension(_))));
        assert!(matches!(diag_part(&Mat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn best_rank_r_keeps_sign() {
        let a = Mat::from_diag(&[5.0, -4.0, 1.0]);
        let t = best_rank_r(&a, 2).unwrap();
        assert!(t.sub(&Mat::from_diag(&[5.0, -4.0, 0.0])).unwrap().max_abs() < 1e-14);
        assert!(matches!(best_rank_r(&a, 0), Err(Error::Parameter(_))));
        assert!(matches!(best_rank_r(&a, 4), Err(Error::Parameter(_))));
    }

    #[test]
    fn best_rank_r_rank_one_input() {
        let u = [0.5, -0.5, 0.5, 0.5];
        let a = Mat::from_fn(4, 4, |i, j| u[i] * u[j]);
        let t = best_rank_r(&a, 1).unwrap();
        assert!(t.sub(&a).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(psd_sqrt(&Mat::identity(4), DEFAULT_CLAMP_TOL)
            .unwrap()
            .sub(&Mat::identity(4))
            .unwrap()
            .max_abs()
            < 1e-15);
        let r = psd_sqrt(&Mat::from_diag(&[4.0, 9.0]), DEFAULT_CLAMP_TOL).unwrap();
        assert!(r.sub(&Mat::from_diag(&[2.0, 3.0])).unwrap().max_abs() < 1e-15);
        // tiny negative rounding is clamped, real negatives are rejected
        let ok = psd_sqrt(&Mat::from_diag(&[1.0, -1e-12]), DEFAULT_CLAMP_TOL).unwrap();
        assert_eq!(ok[(1, 1)], 0.0);
        assert!(matches!(
            psd_sqrt(&Mat::from_diag(&[1.0, -1e-3]), DEFAULT_CLAMP_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn inv_sqrt_whitens() {
        let s = Mat::from_rows(&[vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let w = psd_inv_sqrt(&s, 1e-12).unwrap();
        let white = matmul(&matmul(&w, &s).unwrap(), &w).unwrap();
        assert!(white.sub(&Mat::identity(2)).unwrap().max_abs() < 1e-12);
    }
}
