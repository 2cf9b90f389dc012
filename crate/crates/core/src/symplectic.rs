//! Symplectic linear algebra on `C^{2m}`.
//!
//! Vectors are split into a first half `x` and a second half `y` (for the
//! trace space: Dirichlet and Neumann data). The form is
//! `ω(u, v) = Σ u_y·conj(v_x) − u_x·conj(v_y) = ⟨𝒥u, v⟩` with
//! `𝒥 = [[0, I], [−I, 0]]`. A Lagrangian plane is stored as a `2m × m` frame
//! `[X; Y]` whose columns span it.

use serde::Serialize;

use crate::linalg::{orthonormal_columns, singular_values_ascending, spectral_norm, unitary_eigen};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Default rank / isotropy tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default tolerance on eigenphases for "eigenvalue equals 1".
pub const DEFAULT_TOL_PHASE: f64 = 1e-7;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymplecticSpace {
    half_dim: usize,
}

impl SymplecticSpace {
    pub fn new(half_dim: usize) -> Result<Self> {
        if half_dim == 0 {
            return Err(Error::InvalidArgument("symplectic space needs positive half dimension".into()));
        }
        Ok(Self { half_dim })
    }

    pub fn half_dim(&self) -> usize {
        self.half_dim
    }

    pub fn dim(&self) -> usize {
        2 * self.half_dim
    }

    /// The complex structure `𝒥 = [[0, I], [−I, 0]]`.
    pub fn complex_structure(&self) -> CMatrix {
        let m = self.half_dim;
        let mut j = CMatrix::zeros(2 * m, 2 * m);
        for k in 0..m {
            j[(k, m + k)] = C64::new(1.0, 0.0);
            j[(m + k, k)] = C64::new(-1.0, 0.0);
        }
        j
    }
}

/// The symplectic form on `C^{2m}`.
pub fn omega(u: &CVector, v: &CVector) -> Result<C64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    if !u.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch { expected: u.len() + 1, got: u.len() });
    }
    let m = u.len() / 2;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..m {
        acc += u[m + k] * v[k].conj() - u[k] * v[m + k].conj();
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagrangianDiagnostics {
    pub rank: usize,
    pub min_singular_value: f64,
    /// `‖Y*X − X*Y‖` on the column-orthonormalized frame.
    pub isotropy_residual: f64,
    pub is_lagrangian: bool,
}

/// Rank and isotropy test for a candidate `2m × m` frame.
///
/// Rank is decided on the raw frame (`σ_min > tol·max(1, σ_max)`); isotropy is
/// measured after orthonormalizing the columns so that the residual does not
/// depend on how the frame happens to be scaled.
pub fn is_lagrangian(f: &CMatrix, tol: f64) -> LagrangianDiagnostics {
    let (rows, cols) = f.shape();
    if cols == 0 || rows != 2 * cols {
        return LagrangianDiagnostics {
            rank: 0,
            min_singular_value: 0.0,
            isotropy_residual: f64::INFINITY,
            is_lagrangian: false,
        };
    }
    let s = singular_values_ascending(f);
    let s_max = s.last().copied().unwrap_or(0.0);
    let threshold = tol * s_max.max(1.0);
    let rank = s.iter().filter(|&&x| x > threshold).count();
    let basis = if rank == cols { orthonormal_columns(f) } else { f.clone() };
    let (x, y) = split(&basis);
    let residual = (y.adjoint() * &x - x.adjoint() * &y).norm();
    LagrangianDiagnostics {
        rank,
        min_singular_value: s[0],
        isotropy_residual: residual,
        is_lagrangian: rank == cols && residual <= tol,
    }
}

fn split(f: &CMatrix) -> (CMatrix, CMatrix) {
    let m = f.ncols();
    (f.rows(0, m).into_owned(), f.rows(m, m).into_owned())
}

/// A frame spanning a Lagrangian plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame {
    matrix: CMatrix,
}

impl LagrangianFrame {
    /// Validates the frame with [`is_lagrangian`].
    pub fn new(matrix: CMatrix, tol: f64) -> Result<Self> {
        let d = is_lagrangian(&matrix, tol);
        if !d.is_lagrangian {
            return Err(Error::NotLagrangian(format!(
                "{}×{} frame, rank {}, isotropy residual {:.3e}",
                matrix.nrows(),
                matrix.ncols(),
                d.rank,
                d.isotropy_residual
            )));
        }
        Ok(Self { matrix })
    }

    /// Builds `[X; Y]` from its blocks and validates it.
    pub fn from_blocks(x: &CMatrix, y: &CMatrix, tol: f64) -> Result<Self> {
        if x.shape() != y.shape() || x.nrows() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.nrows() });
        }
        let m = x.nrows();
        let mut f = CMatrix::zeros(2 * m, m);
        f.rows_mut(0, m).copy_from(x);
        f.rows_mut(m, m).copy_from(y);
        Self::new(f, tol)
    }

    /// Caller guarantees the frame is Lagrangian (e.g. exact constructions).
    pub(crate) fn new_unchecked(matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), 2 * matrix.ncols());
        Self { matrix }
    }

    /// The plane `{x + iy = W(x − iy)}` of a unitary `W`; inverse of
    /// [`souriau_unitary`].
    pub fn from_unitary(w: &CMatrix) -> Self {
        let m = w.nrows();
        let id = CMatrix::identity(m, m);
        let x = (w + &id).scale(0.5);
        let y = (w - &id) * C64::new(0.0, -0.5);
        let mut f = CMatrix::zeros(2 * m, m);
        f.rows_mut(0, m).copy_from(&x);
        f.rows_mut(m, m).copy_from(&y);
        Self { matrix: orthonormal_columns(&f) }
    }

    /// The plane `{(x, 0)}`.
    pub fn horizontal(m: usize) -> Self {
        let mut f = CMatrix::zeros(2 * m, m);
        f.rows_mut(0, m).fill_with_identity();
        Self { matrix: f }
    }

    /// The plane `{(0, y)}` (for the trace space: vanishing Dirichlet data).
    pub fn vertical(m: usize) -> Self {
        let mut f = CMatrix::zeros(2 * m, m);
        f.rows_mut(m, m).fill_with_identity();
        Self { matrix: f }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn half_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn space(&self) -> SymplecticSpace {
        SymplecticSpace { half_dim: self.half_dim() }
    }

    pub fn top(&self) -> CMatrix {
        split(&self.matrix).0
    }

    pub fn bottom(&self) -> CMatrix {
        split(&self.matrix).1
    }

    /// Same plane, orthonormal columns.
    pub fn orthonormalized(&self) -> Self {
        Self { matrix: orthonormal_columns(&self.matrix) }
    }

    /// Orthogonal projection onto the plane.
    pub fn projector(&self) -> CMatrix {
        let q = orthonormal_columns(&self.matrix);
        &q * q.adjoint()
    }

    /// Distance from `v` to the plane relative to `‖v‖`.
    pub fn relative_residual(&self, v: &CVector) -> f64 {
        let q = orthonormal_columns(&self.matrix);
        let r = v - &q * (q.adjoint() * v);
        r.norm() / v.norm().max(f64::MIN_POSITIVE)
    }

    /// Right-multiplies the frame; same plane when `g` is invertible.
    pub fn reframed(&self, g: &CMatrix) -> Self {
        Self { matrix: &self.matrix * g }
    }

    fn check_space(&self, other: &Self) -> Result<()> {
        if self.matrix.shape() != other.matrix.shape() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: other.matrix.nrows() });
        }
        Ok(())
    }
}

/// Unitary representation `W = (X + iY)(X − iY)⁻¹` of the plane, computed on
/// the orthonormalized frame (where `X ± iY` are unitary).
///
/// Only intersection dimensions and phase differences derived from `W` carry
/// meaning; the individual entries depend on this particular convention.
pub fn souriau_unitary(f: &LagrangianFrame) -> Result<CMatrix> {
    let d = is_lagrangian(f.matrix(), DEFAULT_TOL);
    if !d.is_lagrangian {
        return Err(Error::NotLagrangian(format!(
            "rank {} of {}, isotropy residual {:.3e}",
            d.rank,
            f.half_dim(),
            d.isotropy_residual
        )));
    }
    Ok(souriau_of_orthonormal(&orthonormal_columns(f.matrix())))
}

/// Unchecked version for frames already known to be orthonormal Lagrangian.
pub(crate) fn souriau_of_orthonormal(q: &CMatrix) -> CMatrix {
    let (x, y) = split(q);
    let plus = &x + &y * I;
    let minus = &x - &y * I;
    // minus is unitary up to rounding; LU keeps W tied to the actual frame.
    let inv = minus.clone().lu().try_inverse().unwrap_or_else(|| minus.adjoint());
    plus * inv
}

/// Eigenphases of `W₁W₂*` with `|phase| ≤ tol_phase`; equals `dim(F₁ ∩ F₂)`.
pub fn intersection_dim(f1: &LagrangianFrame, f2: &LagrangianFrame, tol_phase: f64) -> Result<usize> {
    f1.check_space(f2)?;
    let w = souriau_unitary(f1)? * souriau_unitary(f2)?.adjoint();
    let (phases, _) = unitary_eigen(&w);
    Ok(phases.iter().filter(|p| p.abs() <= tol_phase).count())
}

/// Grassmannian distance `‖P₁ − P₂‖` (operator norm).
pub fn plane_distance(f1: &LagrangianFrame, f2: &LagrangianFrame) -> Result<f64> {
    f1.check_space(f2)?;
    Ok(projector_distance(&f1.projector(), &f2.projector()))
}

pub(crate) fn projector_distance(p1: &CMatrix, p2: &CMatrix) -> f64 {
    spectral_norm(&(p1 - p2))
}
