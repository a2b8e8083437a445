//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

/// Spectral norm. Closed form for vectors and 2x2, SVD otherwise.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r == 1 || c == 1 {
        return m.norm();
    }
    if r == 2 && c == 2 {
        let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let p = libm::hypot(a + d, cc - b);
        let q = libm::hypot(a - d, b + cc);
        return 0.5 * (p + q);
    }
    m.singular_values().max()
}

/// Smallest singular value.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r == 2 && c == 2 {
        let (a, b, cc, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let p = libm::hypot(a + d, cc - b);
        let q = libm::hypot(a - d, b + cc);
        return 0.5 * (p - q).abs();
    }
    m.singular_values().min()
}

/// Full SVD with singular values sorted in decreasing order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// SVD of a square (or tall) matrix with columns of `u`, `v` ordered by decreasing singular value.
pub fn svd_sorted(m: &DMatrix<f64>) -> SortedSvd {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested u");
    let v = svd.v_t.expect("requested v").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    SortedSvd { u, sigma, v }
}

/// Orthonormal basis for the column span (assumed full column rank).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    m.clone().qr().q()
}

/// Orthonormal basis of the orthogonal complement of an orthonormal basis.
pub fn complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let k = basis.ncols();
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    if k >= n {
        return DMatrix::zeros(n, 0);
    }
    if n == 2 {
        return DMatrix::from_column_slice(2, 1, &[-basis[(1, 0)], basis[(0, 0)]]);
    }
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    let svd = svd_sorted(&proj);
    svd.u.columns(0, n - k).into_owned()
}

/// Orthonormal basis of the right nullspace, using singular values below `tol`.
pub fn nullspace(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let c = m.ncols();
    let padded = if m.nrows() < c {
        let mut p = DMatrix::zeros(c, c);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = svd_sorted(&padded);
    let keep: Vec<usize> = (0..c).filter(|&i| svd.sigma[i] <= tol).collect();
    DMatrix::from_fn(c, keep.len(), |r, j| svd.v[(r, keep[j])])
}

/// Concatenate matrices with equal row counts side by side.
pub fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = parts.first().map_or(0, |p| p.nrows());
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

/// Smallest principal angle between two subspaces with orthonormal bases whose
/// dimensions sum to at most n. Uses `sigma_min([A B]) = sqrt(2) sin(theta/2)`,
/// which stays accurate for tiny angles.
pub fn min_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 || b.ncols() == 0 {
        return core::f64::consts::FRAC_PI_2;
    }
    let s = min_singular_value(&hcat(&[a, b]));
    2.0 * libm::asin((s / core::f64::consts::SQRT_2).min(1.0))
}

/// Largest principal angle from span(b) to span(a): how far `b` sticks out of `a`.
pub fn containment_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return core::f64::consts::FRAC_PI_2;
    }
    let resid = b - a * (a.transpose() * b);
    libm::asin(spectral_norm(&resid).min(1.0))
}

/// Inverse via LU with partial pivoting.
pub fn lu_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().try_inverse()
}

/// Reciprocal condition number in the 1-norm, given the matrix and its inverse.
pub fn rcond_1(m: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let n1 = |x: &DMatrix<f64>| {
        x.column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    1.0 / (n1(m) * n1(inv))
}

/// Reciprocal 2-norm condition number (`sigma_min / sigma_max`).
pub fn rcond_2(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// Symmetric positive definite square root and its inverse via eigendecomposition.
/// Returns `None` when the smallest eigenvalue is not positive. Also reports the condition.
pub fn spd_sqrt(q: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let sym = (q + q.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) {
        return None;
    }
    let vecs = &eig.eigenvectors;
    let root = vecs * DMatrix::from_diagonal(&eig.eigenvalues.map(libm::sqrt)) * vecs.transpose();
    let inv = vecs
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| 1.0 / libm::sqrt(x)))
        * vecs.transpose();
    Some((root, inv, hi / lo))
}

/// Orthogonal polar factor `M (M^T M)^{-1/2}` of a full-column-rank matrix.
pub fn polar(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    if m.ncols() == 0 {
        return Some((m.clone(), 1.0));
    }
    let gram = m.transpose() * m;
    let (_, inv, cond) = spd_sqrt(&gram)?;
    Some((m * inv, cond))
}

/// Least-squares slope and intercept of `y` against `x`. `None` if `x` has no spread.
pub fn ls_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let spread = points.iter().map(|p| (p.0 - mx).abs()).fold(0.0, f64::max);
    if !(sxx > 0.0) || spread <= 1e-12 * (1.0 + mx.abs()) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_2x2_norms_match_svd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 0.5, 2.0]);
        let sv = m.clone().singular_values();
        assert!((spectral_norm(&m) - sv.max()).abs() < 1e-12);
        assert!((min_singular_value(&m) - sv.min()).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal() {
        let b = orthonormalize(&DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 2.0]));
        let c = complement(&b);
        assert_eq!(c.ncols(), 2);
        assert!((b.transpose() * &c).norm() < 1e-14);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn tiny_angles_are_resolved() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let th: f64 = 1e-11;
        let b = DMatrix::from_row_slice(2, 1, &[libm::cos(th), libm::sin(th)]);
        let got = min_principal_angle(&a, &b);
        assert!((got - th).abs() < 1e-15, "{got}");
    }

    #[test]
    fn polar_of_orthogonal_is_itself() {
        let (c, s) = (libm::cos(0.3), libm::sin(0.3));
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let (p, cond) = polar(&(&r * 5.0)).unwrap();
        assert!((p - r).norm() < 1e-14);
        assert!((cond - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ls_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let (m, b) = ls_fit(&pts).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b + 1.0).abs() < 1e-12);
        assert!(ls_fit(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }
}
