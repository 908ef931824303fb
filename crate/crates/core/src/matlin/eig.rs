//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use crate::error::{Error, Result};

pub const DEFAULT_EIG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalue ordering used when selecting leading eigenpairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EigOrder {
    /// Descending `|λ|` (the singular-value order of a symmetric matrix).
    #[default]
    Magnitude,
    /// Descending signed `λ`.
    Algebraic,
}

impl EigOrder {
    fn key(self, v: f64) -> f64 {
        match self {
            EigOrder::Magnitude => v.abs(),
            EigOrder::Algebraic => v,
        }
    }

    /// Permutation of `values` sorting them in this order (stable).
    pub fn argsort(self, values: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| self.key(values[b]).total_cmp(&self.key(values[a])));
        idx
    }
}

/// Eigendecomposition of a symmetric matrix. `vectors` holds one
/// eigenvector per column, in the same order as `values`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEig {
    /// `Σ values_i v_i v_iᵀ`
    pub fn reconstruct(&self) -> Mat {
        let n = self.vectors.rows();
        let k = self.values.len();
        let mut out = Mat::zeros(n, n);
        let v = &self.vectors;
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += self.values[t] * v[(i, t)] * v[(j, t)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// Keeps the first `k` pairs.
    pub fn truncate(mut self, k: usize) -> SymEig {
        self.values.truncate(k);
        self.vectors = self.vectors.leading_cols(k);
        self
    }

    /// Reorders the pairs (and keeps only the first `k`) according to `order`.
    pub fn reordered(&self, order: EigOrder, k: usize) -> SymEig {
        let perm = order.argsort(&self.values);
        let perm = &perm[..k.min(perm.len())];
        let values = perm.iter().map(|&p| self.values[p]).collect();
        let vectors = Mat::from_fn(self.vectors.rows(), perm.len(), |i, j| {
            self.vectors[(i, perm[j])]
        });
        SymEig { values, vectors }
    }
}

/// Flips each column so that its largest-magnitude entry (lowest index on
/// ties) is nonnegative.
pub fn fix_signs(vectors: &mut Mat) {
    let (n, k) = vectors.shape();
    for j in 0..k {
        let peak = (0..n).fold(0.0_f64, |m, i| m.max(vectors[(i, j)].abs()));
        // entries within rounding of the peak count as ties
        let cut = peak * (1.0 - 1e-12);
        let Some(best) = (0..n).find(|&i| vectors[(i, j)].abs() >= cut) else {
            continue;
        };
        if vectors[(best, j)] < 0.0 {
            for i in 0..n {
                vectors[(i, j)] = -vectors[(i, j)];
            }
        }
    }
}

pub(crate) fn check_symmetric(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    let scale = a.max_abs().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Shape(format!(
            "matrix is not symmetric (max asymmetry {:.3e})",
            asym
        )));
    }
    Ok(())
}

/// Full eigendecomposition by cyclic Jacobi sweeps.
///
/// Sweeps stop once the largest off-diagonal magnitude falls below
/// `tol·‖A‖_F`. Eigenvalues come back in descending `|λ|` order and each
/// eigenvector has its largest-magnitude entry nonnegative.
pub fn sym_eig(a: &Mat, tol: f64) -> Result<SymEig> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tol must be positive, got {}", tol)));
    }
    check_symmetric(a)?;
    let n = a.rows();
    let mut w = a.clone();
    w.symmetrize();
    let fro = w.frobenius();
    // eigenvectors are kept as rows of `vt` so rotations touch contiguous memory
    let mut vt = Mat::identity(n);

    let mut converged = n <= 1 || fro == 0.0;
    let mut last_off = 0.0;
    let mut sweeps = 0;
    while !converged {
        let off = max_off_diag(&w);
        last_off = off;
        if off < tol * fro {
            converged = true;
            break;
        }
        if sweeps == MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        let skip = 1e-3 * tol * fro;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq.abs() <= skip {
                    continue;
                }
                rotate(&mut w, &mut vt, p, q);
            }
        }
    }
    if !converged {
        return Err(Error::Convergence {
            sweeps,
            residual: last_off / fro,
        });
    }

    let values_raw = w.diag();
    let perm = EigOrder::Magnitude.argsort(&values_raw);
    let values = perm.iter().map(|&p| values_raw[p]).collect();
    let mut vectors = Mat::from_fn(n, n, |i, j| vt[(perm[j], i)]);
    fix_signs(&mut vectors);
    Ok(SymEig { values, vectors })
}

fn max_off_diag(w: &Mat) -> f64 {
    let n = w.rows();
    let mut m = 0.0_f64;
    for i in 0..n {
        let row = w.row(i);
        for v in &row[i + 1..] {
            m = m.max(v.abs());
        }
    }
    m
}

/// Annihilates `w[p][q]` with a plane rotation, updating `w` in place and
/// accumulating the rotation into the rows of `vt`.
fn rotate(w: &mut Mat, vt: &mut Mat, p: usize, q: usize) {
    let n = w.rows();
    let apq = w[(p, q)];
    let app = w[(p, p)];
    let aqq = w[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let data = w.data_mut();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = data[p * n + k];
        let akq = data[q * n + k];
        let np = c * akp - s * akq;
        let nq = s * akp + c * akq;
        data[p * n + k] = np;
        data[k * n + p] = np;
        data[q * n + k] = nq;
        data[k * n + q] = nq;
    }
    data[p * n + p] = app - t * apq;
    data[q * n + q] = aqq + t * apq;
    data[p * n + q] = 0.0;
    data[q * n + p] = 0.0;

    let v = vt.data_mut();
    let (head, tail) = v.split_at_mut(q * n);
    let rp = &mut head[p * n..(p + 1) * n];
    let rq = &mut tail[..n];
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let vp = *a;
        let vq = *b;
        *a = c * vp - s * vq;
        *b = s * vp + c * vq;
    }
}
