//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, TbnnError};

/// Max-abs entry of `QᵀQ − I`.
pub fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let gram = q.transpose() * q;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn relative_frobenius(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm().max(f64::MIN_POSITIVE)
}

/// Flip column signs so that the largest-magnitude entry of each column is positive.
pub fn canonicalize_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for v in col.iter() {
            // strict comparison keeps the first index on ties
            if v.abs() > best + 1e-14 {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Extend orthonormal columns to `target` columns by Gram-Schmidt over the canonical basis.
pub fn complete_orthonormal(m: &DMatrix<f64>, target: usize) -> DMatrix<f64> {
    let p = m.nrows();
    let mut cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    let mut k = 0;
    while cols.len() < target && k < p {
        let mut v = DVector::zeros(p);
        v[k] = 1.0;
        for c in &cols {
            let proj = c.dot(&v);
            v.axpy(-proj, c, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
        k += 1;
    }
    DMatrix::from_columns(&cols)
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0).ok_or_else(|| {
        TbnnError::EigenFailure(format!(
            "dim {n}, frobenius norm {:.6e}, max |entry| {:.6e}",
            m.norm(),
            max_abs(m)
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn kron_identity(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(r * d, c * d);
    for i in 0..r {
        for j in 0..c {
            for k in 0..d {
                out[(i * d + k, j * d + k)] = m[(i, j)];
            }
        }
    }
    out
}
