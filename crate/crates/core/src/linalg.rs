//! Small dense helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Cholesky factorization that refuses matrices whose smallest eigenvalue is
/// not above `floor`.
///
/// The check factors `m - floor * I`; a failed factorization there means the
/// matrix has an eigenvalue at or below the floor.
pub fn spd_factor(m: &DMatrix<f64>, floor: f64) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in matrix to factor".into()));
    }
    if floor > 0.0 {
        let shifted = m - DMatrix::identity(m.nrows(), m.ncols()) * floor;
        if Cholesky::new(shifted).is_none() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite above the floor {floor:e}"
            )));
        }
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

/// Operator norm from (R^n, l1) to (R^d, l2): the largest column l2 norm.
pub fn norm_l1_l2(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues
}

/// (min, max) eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = symmetric_eigenvalues(m);
    (ev.min(), ev.max())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Orthonormal basis of the column span, using the rank threshold
/// `rel_tol * sigma_max`. Returns a d x rank matrix.
pub fn column_span_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let d = m.nrows();
    if m.ncols() == 0 || d == 0 {
        return DMatrix::zeros(d, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| smax > 0.0 && **s > rel_tol * smax)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Numerical rank with threshold `rel_tol * sigma_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    column_span_basis(m, rel_tol).ncols()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn dmat(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_l2_norm_is_max_column_norm() {
        let m = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 1.0, 4.0, 1.0, 1.0]);
        assert_eq!(norm_l1_l2(&m), 5.0);
    }

    #[test]
    fn spd_factor_floor() {
        let m = DMatrix::from_diagonal(&dvec(&[1.0, 0.3]));
        assert!(spd_factor(&m, 0.2).is_ok());
        assert!(matches!(spd_factor(&m, 0.5), Err(Error::Numerical(_))));
        let indefinite = DMatrix::from_diagonal(&dvec(&[1.0, -0.1]));
        assert!(spd_factor(&indefinite, 0.0).is_err());
    }

    #[test]
    fn rank_of_dependent_columns() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rank(&m, 1e-10), 1);
        assert_eq!(column_span_basis(&m, 1e-10).ncols(), 1);
    }
}
