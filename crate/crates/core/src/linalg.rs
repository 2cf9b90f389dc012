//! Small dense helpers on top of nalgebra.

use nalgebra::{ComplexField, DMatrix, Dyn, SVD};

use crate::{CMatrix, C64};

/// SVD with a capped iteration count, relaxing the tolerance if it stalls.
pub(crate) fn capped_svd<T: ComplexField<RealField = f64>>(m: DMatrix<T>, u: bool, v: bool) -> SVD<T, Dyn, Dyn> {
    for eps in [f64::EPSILON, 1e-15, 1e-14] {
        if let Some(svd) = m.clone().try_svd(u, v, eps, 2000) {
            return svd;
        }
    }
    m.svd(u, v)
}

/// Singular values in ascending order together with the matching right
/// singular vectors (as columns). Works for any shape by padding wide
/// matrices with zero rows so that the full right basis is available.
pub(crate) fn svd_ascending(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (rows, cols) = m.shape();
    let work = if rows < cols {
        let mut padded = CMatrix::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = capped_svd(work, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut vectors = CMatrix::zeros(cols, cols);
    for (k, &i) in order.iter().enumerate() {
        let col = v_t.row(i).adjoint();
        vectors.set_column(k, &col);
    }
    (values, vectors)
}

pub(crate) fn singular_values_ascending(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = capped_svd(m.clone(), false, false).singular_values.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

pub(crate) fn spectral_norm(m: &CMatrix) -> f64 {
    capped_svd(m.clone(), false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Orthonormal basis of the column space (thin QR). Assumes full column rank.
pub(crate) fn orthonormal_columns(m: &CMatrix) -> CMatrix {
    m.clone().qr().q()
}

/// Eigenphases in `(-π, π]` and eigenvectors of a unitary matrix.
///
/// A unitary matrix is normal, so its complex Schur form is diagonal and the
/// Schur vectors are eigenvectors. The QR iteration is capped; if it stalls
/// the matrix is rotated by a global phase, which moves the shifts.
pub(crate) fn unitary_eigen(u: &CMatrix) -> (Vec<f64>, CMatrix) {
    for attempt in 0..6 {
        let alpha = 0.7 * attempt as f64;
        let rotated = u * C64::from_polar(1.0, alpha);
        if let Some(schur) = rotated.try_schur(1e-15, 1000) {
            let (q, t) = schur.unpack();
            let phases = (0..t.nrows()).map(|i| wrap_phase(t[(i, i)].arg() - alpha)).collect();
            return (phases, q);
        }
    }
    let (q, t) = u.clone().schur().unpack();
    ((0..t.nrows()).map(|i| t[(i, i)].arg()).collect(), q)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub(crate) fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.clone().try_symmetric_eigen(1e-15, 2000).unwrap_or_else(|| sym.symmetric_eigen());
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

#[cfg(test)]
pub(crate) fn cvec(v: &[C64]) -> crate::CVector {
    crate::CVector::from_column_slice(v)
}

/// Wrap an angle into `(-π, π]`.
pub(crate) fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}
