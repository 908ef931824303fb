//! Leading eigenpairs of a large symmetric matrix.
//!
//! Small problems go straight to the Jacobi solver. Larger ones use shifted
//! block subspace iteration with a Rayleigh–Ritz step on every pass; the
//! shift (for algebraic ordering) comes from a short Lanczos estimate of the
//! smallest eigenvalue so that the iterated operator is positive
//! semidefinite. A block that fails to converge falls back to the dense
//! solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eig::{check_symmetric, fix_signs, sym_eig, EigOrder, SymEig, DEFAULT_EIG_TOL};
use super::mat::{dot, matmul, matmul_nt, norm2, Mat};
use crate::error::{Error, Result};

/// Below this dimension the dense Jacobi solver is used directly.
pub const DENSE_CUTOFF: usize = 96;
const OVERSAMPLE: usize = 8;
const MAX_BLOCK_ITERS: usize = 3000;
const RESIDUAL_TOL: f64 = 1e-12;
const LANCZOS_STEPS: usize = 48;
const START_SEED: u64 = 0x5eed_b10c;

/// The `k` leading eigenpairs of symmetric `a` in the requested order.
///
/// `start`, when given, seeds the iteration with its columns (an `n×m`
/// matrix whose span approximates the wanted subspace). The result is
/// deterministic for identical inputs.
pub fn top_eigenpairs(a: &Mat, k: usize, order: EigOrder, start: Option<&Mat>) -> Result<SymEig> {
    check_symmetric(a)?;
    let n = a.rows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "requested {} eigenpairs of a {}x{} matrix",
            k, n, n
        )));
    }
    if n <= DENSE_CUTOFF || 4 * (k + OVERSAMPLE) >= n {
        return dense_top(a, k, order);
    }
    match subspace_iteration(a, k, order, start)? {
        Some(e) => Ok(e),
        None => dense_top(a, k, order),
    }
}

fn dense_top(a: &Mat, k: usize, order: EigOrder) -> Result<SymEig> {
    let full = sym_eig(a, DEFAULT_EIG_TOL)?;
    Ok(full.reordered(order, k))
}

/// Rows of the returned matrix are orthonormal vectors spanning the start block.
fn initial_block(n: usize, p: usize, start: Option<&Mat>) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED ^ n as u64);
    let mut q = Mat::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
    if let Some(s) = start {
        if s.rows() == n {
            let m = s.cols().min(p);
            for j in 0..m {
                for i in 0..n {
                    q[(j, i)] = s[(i, j)] + 1e-3 * q[(j, i)] / (n as f64).sqrt();
                }
            }
        }
    }
    orthonormalize_rows(&mut q);
    q
}

/// Modified Gram–Schmidt (two passes) on the rows of `q`. Rows that vanish
/// are replaced by fresh deterministic directions.
pub(crate) fn orthonormalize_rows(q: &mut Mat) {
    let (p, n) = q.shape();
    let mut refill = ChaCha8Rng::seed_from_u64(START_SEED.rotate_left(17) ^ (n as u64));
    for j in 0..p {
        let mut attempts = 0;
        loop {
            let orig = norm2(q.row(j));
            for _ in 0..2 {
                for i in 0..j {
                    let c = dot(q.row(i), q.row(j));
                    let (head, tail) = q.data_mut().split_at_mut(j * n);
                    let qi = &head[i * n..(i + 1) * n];
                    for (x, y) in tail[..n].iter_mut().zip(qi) {
                        *x -= c * y;
                    }
                }
            }
            let nrm = norm2(q.row(j));
            if nrm > 1e-10 * orig.max(f64::MIN_POSITIVE) && nrm > 0.0 {
                for x in q.row_mut(j) {
                    *x /= nrm;
                }
                break;
            }
            attempts += 1;
            assert!(attempts < 10, "unable to complete an orthonormal block");
            for x in q.row_mut(j) {
                *x = refill.random_range(-1.0..1.0);
            }
        }
    }
}

/// Smallest eigenvalue estimate from a Lanczos run with full
/// reorthogonalization. Ritz values never undershoot the true minimum.
fn lanczos_min(a: &Mat) -> Result<f64> {
    let n = a.rows();
    let m = LANCZOS_STEPS.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED.wrapping_mul(3) ^ n as u64);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    for step in 0..m {
        let mut w = symv(a, &v);
        let al = dot(&w, &v);
        alpha.push(al);
        basis.push(v);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bt = norm2(&w);
        if step + 1 == m || bt <= 1e-12 * al.abs().max(1e-300) {
            break;
        }
        beta.push(bt);
        v = w.into_iter().map(|x| x / bt).collect();
    }
    let k = alpha.len();
    let mut t = Mat::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let e = sym_eig(&t, DEFAULT_EIG_TOL)?;
    Ok(e.values.iter().cloned().fold(f64::INFINITY, f64::min))
}

fn symv(a: &Mat, x: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), x)).collect()
}

fn subspace_iteration(
    a: &Mat,
    k: usize,
    order: EigOrder,
    start: Option<&Mat>,
) -> Result<Option<SymEig>> {
    let n = a.rows();
    let p = (k + OVERSAMPLE).min(n);
    let shift = match order {
        EigOrder::Magnitude => 0.0,
        EigOrder::Algebraic => {
            let lmin = lanczos_min(a)?;
            if lmin < 0.0 {
                -1.05 * lmin
            } else {
                0.0
            }
        }
    };

    let mut q = initial_block(n, p, start);
    for _ in 0..MAX_BLOCK_ITERS {
        // rows of `y` are (A q_j)ᵀ since A is symmetric
        let mut y = matmul(&q, a)?;
        let mut h = matmul_nt(&q, &y)?;
        h.symmetrize();
        let small = sym_eig(&h, DEFAULT_EIG_TOL)?.reordered(order, p);
        // Ritz vectors X = S ᵀQ (as rows) and AX likewise
        let st = small.vectors.transpose();
        let x = matmul(&st, &q)?;
        let ax = matmul(&st, &y)?;
        let scale = small.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for j in 0..k {
            let th = small.values[j];
            let r: f64 = ax
                .row(j)
                .iter()
                .zip(x.row(j))
                .map(|(u, v)| (u - th * v).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        if scale == 0.0 || worst <= RESIDUAL_TOL * scale {
            let values = small.values[..k].to_vec();
            let mut vectors = Mat::from_fn(n, k, |i, j| x[(j, i)]);
            fix_signs(&mut vectors);
            return Ok(Some(SymEig { values, vectors }));
        }
        // next block: (A + shift·I) X
        for j in 0..p {
            let xr = x.row(j).to_vec();
            let yr = ax.row(j);
            let dst = y.row_mut(j);
            for ((d, a), b) in dst.iter_mut().zip(yr).zip(&xr) {
                *d = a + shift * b;
            }
        }
        orthonormalize_rows(&mut y);
        q = y;
    }
    Ok(None)
}
