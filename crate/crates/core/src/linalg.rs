//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

/// Relative singular-value cutoff used for ranks and pseudo-inverses.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Singular values in decreasing order (empty for empty matrices).
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Numerical rank with cutoff `rel_tol * sigma_max`.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// Smallest singular value over `min(nrows, ncols)`; zero when the matrix is wide.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.ncols() > a.nrows() {
        return 0.0;
    }
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Moore-Penrose pseudo-inverse with singular values below `rel_tol * sigma_max` discarded.
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(i).transpose() * u.column(i).transpose()) / s;
        }
    }
    out
}

/// Right singular vector of the smallest singular value, with that value.
/// Wide matrices get an exact null vector from the completed basis.
pub fn smallest_right_singular(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    if a.nrows() >= a.ncols() {
        let svd = SVD::new(a.clone(), false, true);
        let vt = svd.v_t.as_ref().expect("v_t requested");
        let (idx, s) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, v)| (i, *v))
            .expect("non-empty");
        return (s, vt.row(idx).transpose());
    }
    // Wide: the Gram matrix has a non-trivial kernel and yields a full basis.
    let eig = SymmetricEigen::new(a.transpose() * a);
    let idx = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    let v = eig.eigenvectors.column(idx).into_owned();
    ((a * &v).norm(), v)
}

/// Orthonormal basis (as columns) of the row space of `a`.
pub fn row_space_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), 0);
    }
    let svd = SVD::new(a.clone(), false, true);
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * smax && s > 0.0)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the orthogonal complement of the unit vector `u` in `R^d`.
pub fn complement_basis(u: &DVector<f64>) -> DMatrix<f64> {
    let d = u.len();
    let u = u.normalize();
    // Householder reflector H with H e_1 = +-u; its remaining columns span u^perp.
    let mut v = u.clone();
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vn = v.norm_squared();
    let h = DMatrix::identity(d, d) - (&v * v.transpose()) * (2.0 / vn);
    h.columns(1, d - 1).into_owned()
}

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn symmetric_eig_range(a: &DMatrix<f64>) -> (f64, f64) {
    if a.is_empty() {
        return (0.0, 0.0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// 2-norm condition number of a square matrix (`inf` if singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let p = pinv(&a, RANK_TOLERANCE);
        // Penrose conditions
        assert!((&a * &p * &a - &a).norm() < 1e-12);
        assert!((&p * &a * &p - &p).norm() < 1e-12);
        assert_eq!(rank(&a, RANK_TOLERANCE), 1);
    }

    #[test]
    fn complement_is_orthonormal() {
        let u = DVector::from_vec(vec![0.3, -0.4, 0.5, 0.1]);
        let t = complement_basis(&u);
        assert_eq!(t.shape(), (4, 3));
        assert!((t.transpose() * &t - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((t.transpose() * u.normalize()).norm() < 1e-14);
    }

    #[test]
    fn null_vector_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (s, v) = smallest_right_singular(&a);
        assert!(s < 1e-14);
        assert!((v[0] + v[1]).abs() < 1e-14);
    }
}
