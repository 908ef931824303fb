//! Entrywise distribution theory for the aligned estimator and its
//! plug-in counterparts: `σ_ij`, limiting covariances `S_i`, class-wise
//! estimates `Ŝ^(k)`, pivots, confidence ellipses and assumption checks.
//!
//! Row and column indices are 0-based throughout.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::matlin::{
    incoherence_mu0, matmul, matmul_tn, psd_eig, spectral_map, sym_eig, two_inf_norm, Frame, Mat,
    DEFAULT_CLAMP_TOL, DEFAULT_EIG_TOL,
};
use crate::synthgen::{RealizedCov, SignalModel};

/// Relative eigenvalue floor below which `Ŝ^(k)` counts as singular.
pub const SINGULAR_FLOOR: f64 = 1e-12;

/// `λ_r / (σ √(r d))`
pub fn snr(lambdas: &[f64], sigma: f64, r: usize, d: usize) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("noise level must be positive, got {}", sigma)));
    }
    if r == 0 || r > lambdas.len() || d == 0 {
        return Err(Error::Parameter(format!(
            "need 1 <= r <= {} and d >= 1 (r = {}, d = {})",
            lambdas.len(),
            r,
            d
        )));
    }
    let lr = lambdas[r - 1];
    if !(lr > 0.0) {
        return Err(Error::Parameter(format!("lambda_r must be positive, got {}", lr)));
    }
    Ok(lr / (sigma * ((r * d) as f64).sqrt()))
}

fn check_law_shapes(sigma_i: &Mat, v: &Mat, lambdas: &[f64]) -> Result<()> {
    if !sigma_i.is_square() || sigma_i.rows() != v.rows() {
        return Err(Error::Shape(format!(
            "Sigma is {}x{} but V is {}x{}",
            sigma_i.rows(),
            sigma_i.cols(),
            v.rows(),
            v.cols()
        )));
    }
    if lambdas.len() != v.cols() {
        return Err(Error::Shape(format!(
            "{} singular values for {} columns of V",
            lambdas.len(),
            v.cols()
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l != 0.0) || !l.is_finite()) {
        return Err(Error::Parameter(format!("singular value {} is not usable", l)));
    }
    Ok(())
}

/// `VᵀΣV`, symmetrized.
fn quadratic_form(sigma_i: &Mat, v: &Mat) -> Result<Mat> {
    let sv = matmul(sigma_i, v)?;
    let mut q = matmul_tn(v, &sv)?;
    q.symmetrize();
    Ok(q)
}

/// `σ_ij = √(V_{·j}ᵀ Σ_i V_{·j}) / λ_j`
pub fn entry_sd(sigma_i: &Mat, v: &Mat, lambdas: &[f64], j: usize) -> Result<f64> {
    if j >= v.cols() {
        return Err(Error::Parameter(format!("column {} out of range 0..{}", j, v.cols())));
    }
    check_law_shapes(sigma_i, v, lambdas)?;
    let vj = v.col(j);
    let d = vj.len();
    let mut q = 0.0;
    for a in 0..d {
        let row = sigma_i.row(a);
        let s: f64 = row.iter().zip(&vj).map(|(x, y)| x * y).sum();
        q += vj[a] * s;
    }
    Ok(q.max(0.0).sqrt() / lambdas[j].abs())
}

/// `S_i = Λ⁻¹ Vᵀ Σ_i V Λ⁻¹`
pub fn limiting_cov(sigma_i: &Mat, v: &Mat, lambdas: &[f64]) -> Result<Mat> {
    check_law_shapes(sigma_i, v, lambdas)?;
    let q = quadratic_form(sigma_i, v)?;
    let r = lambdas.len();
    Ok(Mat::from_fn(r, r, |a, b| q[(a, b)] / (lambdas[a] * lambdas[b])))
}

/// Theoretical `σ_ij` grid and per-class limiting covariances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntrywiseLaw {
    /// `n×r`
    pub sigma: Mat,
    pub per_class_s: Vec<Mat>,
}

impl EntrywiseLaw {
    /// Evaluates the law for every row from its class covariance.
    pub fn from_signal(signal: &SignalModel, covs: &[RealizedCov]) -> Result<Self> {
        let k = signal.num_classes();
        if covs.len() < k {
            return Err(Error::Parameter(format!("{} covariances for {} classes", covs.len(), k)));
        }
        let per_class_s: Vec<Mat> = covs[..k]
            .iter()
            .map(|c| limiting_cov(&c.sigma, signal.v.mat(), &signal.lambdas))
            .collect::<Result<_>>()?;
        let r = signal.rank();
        let sigma = Mat::from_fn(signal.n(), r, |i, j| {
            per_class_s[signal.labels[i]][(j, j)].max(0.0).sqrt()
        });
        Ok(EntrywiseLaw { sigma, per_class_s })
    }
}

/// Class centroids `Ū^(k)` and within-class covariances `Ŝ^(k)` of `Û` rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassCovEstimate {
    pub centroids: Vec<Vec<f64>>,
    pub s_hat: Vec<Mat>,
    pub counts: Vec<usize>,
}

fn num_classes(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

pub fn class_cov_estimate(u_hat: &Frame, labels: &[usize]) -> Result<ClassCovEstimate> {
    let n = u_hat.n();
    let r = u_hat.r();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), n)));
    }
    let k = num_classes(labels);
    let mut counts = vec![0usize; k];
    let mut centroids = vec![vec![0.0; r]; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (a, x) in u_hat.row(i).iter().enumerate() {
            centroids[c][a] += x;
        }
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Parameter(format!("class {} has no rows", c)));
    }
    for (c, m) in centroids.iter_mut().enumerate() {
        m.iter_mut().for_each(|x| *x /= counts[c] as f64);
    }
    let mut s_hat = vec![Mat::zeros(r, r); k];
    for (i, &c) in labels.iter().enumerate() {
        let dev: Vec<f64> = u_hat.row(i).iter().zip(&centroids[c]).map(|(x, m)| x - m).collect();
        for a in 0..r {
            for b in 0..r {
                s_hat[c][(a, b)] += dev[a] * dev[b];
            }
        }
    }
    for (c, s) in s_hat.iter_mut().enumerate() {
        *s = s.scale(1.0 / counts[c] as f64);
        s.symmetrize();
    }
    Ok(ClassCovEstimate {
        centroids,
        s_hat,
        counts,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assigns `k` memberships from the rows of `Û` alone.
///
/// Seeds are chosen by farthest-point traversal starting at row 0, each row
/// goes to its nearest seed, and the assignment is refined once against the
/// resulting centroids. Labels are numbered by first appearance.
pub fn nearest_centroid_labels(u_hat: &Frame, k: usize) -> Result<Vec<usize>> {
    let n = u_hat.n();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("need 1 <= k <= n = {}, got {}", n, k)));
    }
    let mut seeds: Vec<Vec<f64>> = vec![u_hat.row(0).to_vec()];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(u_hat.row(i), &seeds[0])).collect();
    while seeds.len() < k {
        let far = (0..n).fold(0, |b, i| if nearest[i] > nearest[b] { i } else { b });
        seeds.push(u_hat.row(far).to_vec());
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(u_hat.row(i), seeds.last().unwrap()));
        }
    }
    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                (0..centers.len()).fold(0, |b, c| {
                    if sq_dist(u_hat.row(i), &centers[c]) < sq_dist(u_hat.row(i), &centers[b]) {
                        c
                    } else {
                        b
                    }
                })
            })
            .collect()
    };
    let first = assign(&seeds);
    let r = u_hat.r();
    let mut centers = seeds.clone();
    for (c, center) in centers.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| first[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        *center = (0..r)
            .map(|a| members.iter().map(|&i| u_hat.row(i)[a]).sum::<f64>() / members.len() as f64)
            .collect();
    }
    let raw = assign(&centers);
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    Ok(raw
        .into_iter()
        .map(|c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect())
}

/// `(Ŝ)^{-1/2}`, failing when `Ŝ` is numerically singular or its spread is
/// rounding-level next to the class's mean squared row norm.
fn guarded_inv_sqrt(s: &Mat, centroid: &[f64], class: usize) -> Result<Mat> {
    let e = psd_eig(s, DEFAULT_CLAMP_TOL)?;
    let top = e.values.iter().cloned().fold(0.0, f64::max);
    let low = e.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread: f64 = e.values.iter().map(|v| v.max(0.0)).sum();
    let second_moment = spread + centroid.iter().map(|x| x * x).sum::<f64>();
    if !(top > 0.0) || low <= SINGULAR_FLOOR * top || spread <= SINGULAR_FLOOR * SINGULAR_FLOOR * second_moment {
        return Err(Error::DegenerateCovariance(format!(
            "class {} covariance estimate is singular (eigenvalues {:e}..{:e})",
            class, low, top
        )));
    }
    Ok(spectral_map(&e, |v| 1.0 / v.sqrt()))
}

/// `T̂_i = (Ŝ^(k))^{-1/2} (Û_i − Ū^(k))` for every row.
pub fn pivots(u_hat: &Frame, est: &ClassCovEstimate, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<usize> = (0..u_hat.n()).collect();
    pivots_for_rows(u_hat, est, labels, &rows)
}

/// Pivots of the listed rows only.
pub fn pivots_for_rows(
    u_hat: &Frame,
    est: &ClassCovEstimate,
    labels: &[usize],
    rows: &[usize],
) -> Result<Vec<Vec<f64>>> {
    if labels.len() != u_hat.n() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), u_hat.n())));
    }
    let mut roots: Vec<Option<Mat>> = vec![None; est.s_hat.len()];
    rows.iter()
        .map(|&i| {
            let c = *labels
                .get(i)
                .ok_or_else(|| Error::Parameter(format!("row {} out of range", i)))?;
            if c >= est.s_hat.len() {
                return Err(Error::Parameter(format!("label {} has no estimate", c)));
            }
            if roots[c].is_none() {
                roots[c] = Some(guarded_inv_sqrt(&est.s_hat[c], &est.centroids[c], c)?);
            }
            let w = roots[c].as_ref().unwrap();
            let dev: Vec<f64> = u_hat.row(i).iter().zip(&est.centroids[c]).map(|(x, m)| x - m).collect();
            Ok((0..w.rows())
                .map(|a| w.row(a).iter().zip(&dev).map(|(x, y)| x * y).sum())
                .collect())
        })
        .collect()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `q` with `P(χ²_df ≤ q) = level`.
pub fn chi2_quantile(df: usize, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("level must lie in (0,1), got {}", level)));
    }
    if df == 0 {
        return Err(Error::Parameter("chi-square needs df >= 1".into()));
    }
    if df == 2 {
        return Ok(-2.0 * (1.0 - level).ln());
    }
    let a = df as f64 / 2.0;
    let cdf = |q: f64| gamma_lr(a, q / 2.0);
    let mut hi = df as f64;
    while cdf(hi) < level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A `level` confidence ellipse `{x : (x−c)ᵀ cov⁻¹ (x−c) ≤ q}` in the plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub cov: Mat,
    pub level: f64,
    pub quantile: f64,
    /// Semi-axis lengths, major first.
    pub axes: [f64; 2],
    /// Angle of the major axis from the first coordinate axis, radians.
    pub angle: f64,
    pub points: Vec<[f64; 2]>,
}

impl Ellipse {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        // rotate into principal axes
        let (s, c) = self.angle.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2) <= 1.0
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.axes[0] * self.axes[1]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x,y\n");
        for p in &self.points {
            crate::matlin::write_float(&mut out, p[0]);
            out.push(',');
            crate::matlin::write_float(&mut out, p[1]);
            out.push('\n');
        }
        out
    }
}

/// Boundary polyline of the `level` ellipse of a 2×2 covariance, centered at the origin.
pub fn ellipse(cov: &Mat, level: f64, points: usize) -> Result<Ellipse> {
    ellipse_at(cov, [0.0, 0.0], level, points)
}

pub fn ellipse_at(cov: &Mat, center: [f64; 2], level: f64, points: usize) -> Result<Ellipse> {
    if cov.shape() != (2, 2) {
        return Err(Error::Dimension(format!(
            "ellipses need a 2x2 covariance, got {}x{}",
            cov.rows(),
            cov.cols()
        )));
    }
    if points < 3 {
        return Err(Error::Parameter(format!("need at least 3 points, got {}", points)));
    }
    let q = chi2_quantile(2, level)?;
    let mut c = cov.clone();
    c.symmetrize();
    let e = psd_eig(&c, DEFAULT_CLAMP_TOL)?;
    // algebraic order: major axis first
    let (i0, i1) = if e.values[0] >= e.values[1] { (0, 1) } else { (1, 0) };
    let (l0, l1) = (e.values[i0], e.values[i1]);
    if !(l1 > SINGULAR_FLOOR * l0) {
        return Err(Error::DegenerateCovariance(format!(
            "ellipse covariance is singular (eigenvalues {:e}, {:e})",
            l0, l1
        )));
    }
    let v0 = [e.vectors[(0, i0)], e.vectors[(1, i0)]];
    let v1 = [e.vectors[(0, i1)], e.vectors[(1, i1)]];
    let axes = [(q * l0).sqrt(), (q * l1).sqrt()];
    let angle = v0[1].atan2(v0[0]);
    let pts = (0..points)
        .map(|t| {
            let phi = 2.0 * std::f64::consts::PI * t as f64 / points as f64;
            let (s, co) = phi.sin_cos();
            [
                center[0] + axes[0] * co * v0[0] + axes[1] * s * v1[0],
                center[1] + axes[0] * co * v0[1] + axes[1] * s * v1[1],
            ]
        })
        .collect();
    Ok(Ellipse {
        center,
        cov: c,
        level,
        quantile: q,
        axes,
        angle,
        points: pts,
    })
}

/// Spectral norm of a general square matrix.
pub fn spectral_norm(m: &Mat) -> Result<f64> {
    let mut g = matmul_tn(m, m)?;
    g.symmetrize();
    let e = sym_eig(&g, DEFAULT_EIG_TOL)?;
    Ok(e.values.first().map_or(0.0, |v| v.max(0.0).sqrt()))
}

/// Deviation of a plug-in covariance from its limit after alignment.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CovDeviation {
    /// `‖S⁻¹ Oᵀ Ŝ O − I‖`
    pub literal: f64,
    /// `‖S^{-1/2} Oᵀ Ŝ O S^{-1/2} − I‖`
    pub whitened: f64,
}

pub fn cov_deviation(s: &Mat, s_hat: &Mat, o: &Mat) -> Result<CovDeviation> {
    let r = s.rows();
    if s.shape() != (r, r) || s_hat.shape() != (r, r) || o.shape() != (r, r) {
        return Err(Error::Shape("S, S_hat and O must all be r x r".into()));
    }
    let rotated = matmul_tn(o, &matmul(s_hat, o)?)?;
    let e = psd_eig(s, DEFAULT_CLAMP_TOL)?;
    let top = e.values.iter().cloned().fold(0.0, f64::max);
    if e.values.iter().any(|v| *v <= SINGULAR_FLOOR * top) {
        return Err(Error::DegenerateCovariance("limiting covariance is singular".into()));
    }
    let inv = spectral_map(&e, |v| 1.0 / v);
    let inv_half = spectral_map(&e, |v| 1.0 / v.sqrt());
    let eye = Mat::identity(r);
    let literal = spectral_norm(&matmul(&inv, &rotated)?.sub(&eye)?)?;
    let whitened = spectral_norm(&matmul(&inv_half, &matmul(&rotated, &inv_half)?)?.sub(&eye)?)?;
    Ok(CovDeviation { literal, whitened })
}

/// One assumption check. `pass` means the margin is at least 1 unless the
/// check says otherwise.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Margin {
    pub name: String,
    pub assumption: u8,
    pub value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub kappa: f64,
    pub mu0: f64,
    /// `√(max_i ‖Σ_i‖)`
    pub sigma: f64,
    pub snr: f64,
    /// `max(kappa_sigma_upper, 1 / kappa_sigma_lower)`
    pub kappa_sigma: f64,
    /// `max_{i,j} σ / ‖Σ_i^{1/2} V_{·j}‖`
    pub kappa_sigma_upper: f64,
    /// `min_{i,j} σ_i / ‖Σ_i^{1/2} V_{·j}‖`
    pub kappa_sigma_lower: f64,
    pub margins: Vec<Margin>,
}

impl Diagnostics {
    /// Whether every margin of the given assumption passes.
    pub fn passes(&self, assumption: u8) -> bool {
        self.margins
            .iter()
            .filter(|m| m.assumption == assumption)
            .all(|m| m.pass)
    }
}

/// Condition numbers, incoherence, noise level and assumption margins of a
/// signal with per-class covariances.
pub fn diagnostics(signal: &SignalModel, covs: &[RealizedCov]) -> Result<Diagnostics> {
    let n = signal.n();
    let d = signal.d();
    let r = signal.rank();
    let k = signal.num_classes();
    if covs.len() < k {
        return Err(Error::Parameter(format!("{} covariances for {} classes", covs.len(), k)));
    }
    let lam = &signal.lambdas;
    let kappa = lam[0] / lam[r - 1];
    let mu0 = incoherence_mu0(&signal.u, &signal.v)?;
    let class_sigma: Vec<f64> = covs[..k]
        .iter()
        .map(|c| c.spectral_norm().map(|s| s.sqrt()))
        .collect::<Result<_>>()?;
    let sigma = class_sigma.iter().cloned().fold(0.0, f64::max);
    let snr_value = if sigma > 0.0 {
        snr(lam, sigma, r, d)?
    } else {
        f64::INFINITY
    };
    let mut upper: f64 = 0.0;
    let mut lower = f64::INFINITY;
    for (c, cov) in covs[..k].iter().enumerate() {
        let q = quadratic_form(&cov.sigma, signal.v.mat())?;
        for j in 0..r {
            let along = q[(j, j)].max(0.0).sqrt();
            upper = upper.max(sigma / along);
            lower = lower.min(class_sigma[c] / along);
        }
    }
    let kappa_sigma = upper.max(1.0 / lower);
    let log_nd = (n.max(d) as f64).ln();
    let u_norm = two_inf_norm(signal.u.mat());
    let v_norm = two_inf_norm(signal.v.mat());
    let at_least_one = |name: &str, assumption: u8, value: f64| Margin {
        name: name.into(),
        assumption,
        value,
        pass: value >= 1.0,
    };
    let margins = vec![
        at_least_one("snr_over_kappa_sqrt_log", 2, snr_value / (kappa * log_nd.sqrt())),
        at_least_one("d_over_n", 3, d as f64 / n as f64),
        // log(d) <= n, inverted so that larger is better
        at_least_one("n_over_log_d", 3, n as f64 / (d as f64).ln().max(f64::MIN_POSITIVE)),
        at_least_one("sqrt_n_over_kappa2_mu0", 4, (n as f64).sqrt() / (kappa * kappa * mu0)),
        // the constant C_I is unspecified, so only finiteness is checked
        Margin {
            name: "v_over_u_row_norm".into(),
            assumption: 4,
            value: v_norm / u_norm,
            pass: (v_norm / u_norm).is_finite(),
        },
        Margin {
            name: "inverse_kappa_sigma".into(),
            assumption: 5,
            value: 1.0 / kappa_sigma,
            pass: kappa_sigma.is_finite() && kappa_sigma > 0.0,
        },
    ];
    Ok(Diagnostics {
        n,
        d,
        r,
        kappa,
        mu0,
        sigma,
        snr: snr_value,
        kappa_sigma,
        kappa_sigma_upper: upper,
        kappa_sigma_lower: lower,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_arithmetic() {
        assert_eq!(snr(&[20.0, 10.0], 1.0, 2, 50).unwrap(), 1.0);
        assert!(matches!(snr(&[1.0], 0.0, 1, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn chi2_closed_form_and_bisection() {
        let q = chi2_quantile(2, 0.95).unwrap();
        assert!((q - 5.991464547107979).abs() < 1e-12);
        assert!((chi2_quantile(4, 0.95).unwrap() - 9.487729036781154).abs() < 1e-8);
        assert!(chi2_quantile(3, 1.0).is_err());
    }

    #[test]
    fn class_cov_two_points() {
        let u = Frame::new(Mat::from_rows(&[vec![0.6, 0.0], vec![0.0, 0.6], vec![0.8, 0.0], vec![0.0, 0.8]]).unwrap())
            .unwrap();
        let est = class_cov_estimate(&u, &[0, 1, 0, 1]).unwrap();
        assert_eq!(est.counts, vec![2, 2]);
        assert!((est.centroids[0][0] - 0.7).abs() < 1e-15);
        // half-difference (0.1, 0) outer product
        assert!((est.s_hat[0][(0, 0)] - 0.01).abs() < 1e-15);
        assert_eq!(est.s_hat[0][(1, 1)], 0.0);
        assert!(matches!(class_cov_estimate(&u, &[0, 2, 0, 2]), Err(Error::Parameter(_))));
    }

    #[test]
    fn ellipse_circle_and_ratio() {
        let e = ellipse(&Mat::identity(2), 0.95, 64).unwrap();
        for p in &e.points {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 5.991464547107979_f64.sqrt()).abs() < 1e-12);
        }
        let e = ellipse(&Mat::from_diag(&[4.0, 1.0]), 0.95, 16).unwrap();
        assert!((e.axes[0] / e.axes[1] - 2.0).abs() < 1e-12);
        assert!(e.angle.sin().abs() < 1e-12);
        assert!(matches!(
            ellipse(&Mat::from_diag(&[1.0, 0.0]), 0.95, 16),
            Err(Error::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn nearest_centroid_recovers_blocks() {
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|i| match i % 3 {
                0 => vec![1.0 + 0.01 * i as f64, 0.0],
                1 => vec![0.0, 1.0 - 0.01 * i as f64],
                _ => vec![-1.0, -1.0 + 0.001 * i as f64],
            })
            .collect();
        let f = Frame::orthonormalize(&Mat::from_rows(&rows).unwrap()).unwrap();
        let labels = nearest_centroid_labels(&f, 3).unwrap();
        assert_eq!(labels, vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);
    }
}
