//! Vertex conditions `A γ_D f + B γ_N f = 0` and one-parameter families of them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::graph::TraceVector;
use crate::linalg::singular_values_ascending;
use crate::symplectic::{LagrangianFrame, DEFAULT_TOL};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Boundary matrices of a vertex condition, both `2|E| × 2|E|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    pub a: CMatrix,
    pub b: CMatrix,
}

impl BoundaryPair {
    pub fn new(a: CMatrix, b: CMatrix) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.ncols() });
        }
        Ok(Self { a, b })
    }

    /// `f = 0` at every boundary point.
    pub fn dirichlet(n: usize) -> Self {
        Self { a: CMatrix::identity(n, n), b: CMatrix::zeros(n, n) }
    }

    /// `∂_n f = 0` at every boundary point.
    pub fn neumann(n: usize) -> Self {
        Self { a: CMatrix::zeros(n, n), b: CMatrix::identity(n, n) }
    }

    /// `A f + ∂_n f = 0` with Hermitian `A`.
    pub fn robin(a: CMatrix) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, CMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Residual `‖Aφ + Bψ‖` of a trace.
    pub fn residual(&self, trace: &TraceVector) -> Result<f64> {
        self.check_trace(trace)?;
        Ok((&self.a * &trace.dirichlet + &self.b * &trace.neumann).norm())
    }

    fn check_trace(&self, trace: &TraceVector) -> Result<()> {
        if trace.boundary_dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: trace.boundary_dim() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub dim: usize,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// `‖AB* − BA*‖_F / max(1, ‖A‖_F‖B‖_F)`.
    pub symmetry_residual: f64,
    pub det_aa_minus_bb: f64,
    pub det_aa_plus_bb: f64,
    pub passed: bool,
    pub failure: Option<String>,
}

/// Full rank of `(A, B)` and `AB* = BA*`.
///
/// `|det(AA* − BB*)|` is reported but not required: it vanishes for valid
/// conditions such as `f + ∂_n f = 0` (`A = B = I`).
pub fn check_hypothesis(p: &BoundaryPair, tol: f64) -> Result<HypothesisReport> {
    let n = p.dim();
    if p.b.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, got: p.b.nrows() });
    }
    let mut ab = CMatrix::zeros(n, 2 * n);
    ab.view_mut((0, 0), (n, n)).copy_from(&p.a);
    ab.view_mut((0, n), (n, n)).copy_from(&p.b);
    let sv = singular_values_ascending(&ab);
    let s_max = sv.last().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > tol * s_max.max(1.0)).count();
    let sym = (&p.a * p.b.adjoint() - &p.b * p.a.adjoint()).norm() / (p.a.norm() * p.b.norm()).max(1.0);
    let aa = &p.a * p.a.adjoint();
    let bb = &p.b * p.b.adjoint();
    let det_minus = (&aa - &bb).determinant().norm();
    let det_plus = (&aa + &bb).determinant().norm();
    let failure = if rank < n {
        Some(format!("rank(A, B) = {rank} < {n}"))
    } else if sym > tol {
        Some(format!("AB* ≠ BA* (symmetry residual {sym:.3e})"))
    } else {
        None
    };
    Ok(HypothesisReport {
        dim: n,
        rank,
        singular_values: sv,
        symmetry_residual: sym,
        det_aa_minus_bb: det_minus,
        det_aa_plus_bb: det_plus,
        passed: failure.is_none(),
        failure,
    })
}

fn require_hypothesis(p: &BoundaryPair) -> Result<()> {
    let report = check_hypothesis(p, DEFAULT_TOL)?;
    match report.failure {
        Some(msg) => Err(Error::Hypothesis(msg)),
        None => Ok(()),
    }
}

/// The plane `ran(−B*, A*)` of traces satisfying the condition.
pub fn l_frame(p: &BoundaryPair) -> Result<LagrangianFrame> {
    require_hypothesis(p)?;
    let n = p.dim();
    let mut f = CMatrix::zeros(2 * n, n);
    f.view_mut((0, 0), (n, n)).copy_from(&(-p.b.adjoint()));
    f.view_mut((n, 0), (n, n)).copy_from(&p.a.adjoint());
    LagrangianFrame::new(f, DEFAULT_TOL)
}

/// The unique `f` with `φ = −B*f`, `ψ = A*f` for a trace `(φ, ψ)` in the plane.
///
/// Solves `(AA* + BB*) f = Aψ − Bφ`; the matrix is invertible exactly when
/// `(A, B)` has full rank. Where `AA* − BB*` is invertible this coincides with
/// `(AA* − BB*)⁻¹(Bφ + Aψ)`.
pub fn recover_f(p: &BoundaryPair, trace: &TraceVector) -> Result<CVector> {
    p.check_trace(trace)?;
    let scale = (p.a.norm() + p.b.norm()) * trace.stacked().norm();
    let residual = p.residual(trace)?;
    if residual > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::TraceNotInPlane { residual });
    }
    let gram = &p.a * p.a.adjoint() + &p.b * p.b.adjoint();
    let rhs = &p.a * &trace.neumann - &p.b * &trace.dirichlet;
    gram.lu().solve(&rhs).ok_or_else(|| Error::Hypothesis("AA* + BB* is singular: rank(A, B) is deficient".into()))
}

/// The trace `(−B*f, A*f)`.
pub fn trace_of(p: &BoundaryPair, f: &CVector) -> TraceVector {
    TraceVector { dirichlet: -(p.b.adjoint() * f), neumann: p.a.adjoint() * f }
}

/// Condition imposed at the outer (degree-one) vertices of a star.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterCondition {
    Dirichlet,
    Neumann,
    /// `∂_n f = c·f`.
    Robin(f64),
}

type PairFn = Arc<dyn Fn(f64) -> BoundaryPair + Send + Sync>;
type DerivativeFn = Arc<dyn Fn(f64) -> (CMatrix, CMatrix) + Send + Sync>;

/// A C¹ family `t ↦ (A_t, B_t)`.
#[derive(Clone)]
pub struct BoundaryFamily {
    name: String,
    eval: PairFn,
    derivative: Option<DerivativeFn>,
    probe_point: Option<usize>,
}

impl fmt::Debug for BoundaryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryFamily")
            .field("name", &self.name)
            .field("closed_form_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl BoundaryFamily {
    /// Family with central-difference derivatives.
    pub fn new(name: impl Into<String>, eval: impl Fn(f64) -> BoundaryPair + Send + Sync + 'static) -> Self {
        Self { name: name.into(), eval: Arc::new(eval), derivative: None, probe_point: None }
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> (CMatrix, CMatrix) + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    /// Marks a boundary index whose eigenfunction value is of interest
    /// (the center of a δ-star).
    pub fn with_probe_point(mut self, index: usize) -> Self {
        self.probe_point = Some(index);
        self
    }

    pub fn constant(pair: BoundaryPair) -> Self {
        let n = pair.dim();
        Self::new("constant", move |_| pair.clone())
            .with_derivative(move |_| (CMatrix::zeros(n, n), CMatrix::zeros(n, n)))
    }

    /// `A_t = A₀ + tA₁`, `B_t = B₀ + tB₁`.
    pub fn affine(a0: CMatrix, a1: CMatrix, b0: CMatrix, b1: CMatrix) -> Result<Self> {
        BoundaryPair::new(a0.clone(), b0.clone())?;
        BoundaryPair::new(a1.clone(), b1.clone())?;
        if a0.shape() != a1.shape() {
            return Err(Error::DimensionMismatch { expected: a0.nrows(), got: a1.nrows() });
        }
        let (da, db) = (a1.clone(), b1.clone());
        Ok(Self::new("affine", move |t| BoundaryPair { a: &a0 + a1.scale(t), b: &b0 + b1.scale(t) })
            .with_derivative(move |_| (da.clone(), db.clone())))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn probe_point(&self) -> Option<usize> {
        self.probe_point
    }

    pub fn at(&self, t: f64) -> BoundaryPair {
        (self.eval)(t)
    }

    pub fn has_closed_form_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// `(Ȧ_t, Ḃ_t)`, by closed form when available, otherwise by central
    /// differences with step `1e-5·(1 + |t|)`.
    pub fn derivative(&self, t: f64) -> (CMatrix, CMatrix) {
        match &self.derivative {
            Some(d) => d(t),
            None => self.central_difference(t),
        }
    }

    fn central_difference(&self, t: f64) -> (CMatrix, CMatrix) {
        let h = 1e-5 * (1.0 + t.abs());
        let (p, m) = (self.at(t + h), self.at(t - h));
        let s = C64::new(0.5 / h, 0.0);
        ((p.a - m.a) * s, (p.b - m.b) * s)
    }

    /// Mismatch between the supplied derivative and central differences,
    /// relative to `1 + ‖Ȧ‖`. Zero for families without a closed form.
    pub fn derivative_consistency(&self, t: f64) -> f64 {
        if self.derivative.is_none() {
            return 0.0;
        }
        let (da, db) = self.derivative(t);
        let (fa, fb) = self.central_difference(t);
        ((&da - fa).norm() + (&db - fb).norm()) / (1.0 + da.norm())
    }
}

/// Dirichlet at `π`-end (endpoint `b`) and `∂_n f(a) = t·f(a)` at endpoint
/// `a` of a single edge: `A_t = [[−t, 0], [0, 1]]`, `B = [[1, 0], [0, 0]]`.
pub fn robin_interval_family() -> BoundaryFamily {
    let c = |x: f64| C64::new(x, 0.0);
    BoundaryFamily::new("robin_interval", move |t| BoundaryPair {
        a: CMatrix::from_row_slice(2, 2, &[c(-t), c(0.0), c(0.0), c(1.0)]),
        b: CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]),
    })
    .with_derivative(move |_| (CMatrix::from_row_slice(2, 2, &[c(-1.0), c(0.0), c(0.0), c(0.0)]), CMatrix::zeros(2, 2)))
    .with_probe_point(0)
}

/// δ-coupling of strength `t` at the center of a star whose edges all start
/// at the center, with `outer` at every degree-one vertex.
///
/// Rows `0..degree` hold the outer conditions (row `i` for edge `i`), rows
/// `degree..2·degree−1` the continuity conditions `f_i(v) = f_{i+1}(v)`, and
/// the last row `−t f_0(v) + Σ ∂_n f_e(v) = 0`.
pub fn delta_star_pair(degree: usize, outer: OuterCondition, t: f64) -> Result<BoundaryPair> {
    if degree < 2 {
        return Err(Error::InvalidArgument("δ-star needs degree ≥ 2".into()));
    }
    let n = 2 * degree;
    let mut a = CMatrix::zeros(n, n);
    let mut b = CMatrix::zeros(n, n);
    let one = C64::new(1.0, 0.0);
    for i in 0..degree {
        let col = 2 * i + 1;
        match outer {
            OuterCondition::Dirichlet => a[(i, col)] = one,
            OuterCondition::Neumann => b[(i, col)] = one,
            OuterCondition::Robin(c) => {
                a[(i, col)] = C64::new(-c, 0.0);
                b[(i, col)] = one;
            }
        }
    }
    for j in 0..degree - 1 {
        a[(degree + j, 2 * j)] = one;
        a[(degree + j, 2 * (j + 1))] = -one;
    }
    a[(n - 1, 0)] = C64::new(-t, 0.0);
    for e in 0..degree {
        b[(n - 1, 2 * e)] = one;
    }
    Ok(BoundaryPair { a, b })
}

pub fn delta_star_family(degree: usize, outer: OuterCondition) -> Result<BoundaryFamily> {
    delta_star_pair(degree, outer, 0.0)?;
    let n = 2 * degree;
    Ok(BoundaryFamily::new(format!("delta_star[{degree}]"), move |t| {
        delta_star_pair(degree, outer, t).expect("degree checked")
    })
    .with_derivative(move |_| {
        let mut da = CMatrix::zeros(n, n);
        da[(n - 1, 0)] = C64::new(-1.0, 0.0);
        (da, CMatrix::zeros(n, n))
    })
    .with_probe_point(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{is_lagrangian, plane_distance};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn dirichlet_passes() {
        let r = check_hypothesis(&BoundaryPair::dirichlet(4), 1e-9).unwrap();
        assert!(r.passed);
        assert_eq!(r.rank, 4);
    }

    #[test]
    fn rank_deficient_fails() {
        let mut a = CMatrix::identity(2, 2);
        a[(1, 1)] = c(0.0);
        let p = BoundaryPair::new(a, CMatrix::zeros(2, 2)).unwrap();
        let r = check_hypothesis(&p, 1e-9).unwrap();
        assert!(!r.passed);
        assert!(r.failure.unwrap().contains("rank"));
        assert!(matches!(l_frame(&p), Err(Error::Hypothesis(m)) if m.contains("rank")));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        assert!(BoundaryPair::new(CMatrix::identity(2, 2), CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn asymmetric_pair_fails() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(1.0)]);
        let p = BoundaryPair::robin(a).unwrap();
        let r = check_hypothesis(&p, 1e-9).unwrap();
        assert!(!r.passed);
        assert!(r.failure.unwrap().contains("AB*"));
    }

    #[test]
    fn delta_star_degree_two_block() {
        let t = 0.7;
        let p = delta_star_pair(2, OuterCondition::Dirichlet, t).unwrap();
        // central block on the center indices (0, 2), center rows (2, 3)
        assert_eq!(p.a[(2, 0)], c(1.0));
        assert_eq!(p.a[(2, 2)], c(-1.0));
        assert_eq!(p.a[(3, 0)], c(-t));
        assert_eq!(p.a[(3, 2)], c(0.0));
        assert_eq!(p.b[(3, 0)], c(1.0));
        assert_eq!(p.b[(3, 2)], c(1.0));
        assert_eq!(p.b[(2, 0)], c(0.0));
    }

    #[test]
    fn delta_star_product_carries_t() {
        for degree in 2..=5 {
            let t = 1.3;
            let p = delta_star_pair(degree, OuterCondition::Neumann, t).unwrap();
            // on the centre block A*B is −t in the first row
            let prod = p.a.adjoint() * &p.b;
            let centers: Vec<usize> = (0..degree).map(|e| 2 * e).collect();
            for (i, &r) in centers.iter().enumerate() {
                for (j, &s) in centers.iter().enumerate() {
                    let expect = if i == 0 { -t } else { 0.0 };
                    assert!((prod[(r, s)] - c(expect)).norm() < 1e-15, "deg {degree} ({i},{j})");
                }
            }
            assert!((&p.a * p.b.adjoint() - &p.b * p.a.adjoint()).norm() == 0.0);
        }
    }

    #[test]
    fn delta_star_all_outer_variants_pass() {
        for outer in [OuterCondition::Dirichlet, OuterCondition::Neumann, OuterCondition::Robin(-0.8)] {
            for t in [-3.0, 0.0, 2.5] {
                let p = delta_star_pair(3, outer, t).unwrap();
                assert!(check_hypothesis(&p, 1e-9).unwrap().passed);
                let f = l_frame(&p).unwrap();
                assert!(is_lagrangian(f.matrix(), 1e-10).is_lagrangian);
            }
        }
        assert!(delta_star_pair(1, OuterCondition::Neumann, 0.0).is_err());
    }

    #[test]
    fn kirchhoff_at_t_zero() {
        let p = delta_star_pair(3, OuterCondition::Neumann, 0.0).unwrap();
        // a function equal to 1 at the center with zero derivatives satisfies it
        let mut phi = CVector::zeros(6);
        let psi = CVector::zeros(6);
        for e in 0..3 {
            phi[2 * e] = c(1.0);
            phi[2 * e + 1] = c(0.3 * e as f64);
        }
        let trace = TraceVector::new(phi, psi).unwrap();
        assert!(p.residual(&trace).unwrap() < 1e-15);
    }

    #[test]
    fn l_frame_examples() {
        let d = l_frame(&BoundaryPair::dirichlet(2)).unwrap();
        assert!(plane_distance(&d, &LagrangianFrame::vertical(2)).unwrap() < 1e-15);
        let n = l_frame(&BoundaryPair::neumann(2)).unwrap();
        assert!(plane_distance(&n, &LagrangianFrame::horizontal(2)).unwrap() < 1e-15);
        // Robin interval pair: f′(0) = t f(0), f(π) = 0
        let t = 0.6;
        let p = robin_interval_family().at(t);
        let f = l_frame(&p).unwrap();
        let m = f.matrix();
        for col in 0..2 {
            let (fa, fb, da) = (m[(0, col)], m[(1, col)], m[(2, col)]);
            assert!((da - fa * t).norm() < 1e-15);
            assert!(fb.norm() < 1e-15);
        }
    }

    #[test]
    fn recover_f_examples() {
        let psi = CVector::from_vec(vec![c(1.0), c(-2.0)]);
        let f =
            recover_f(&BoundaryPair::dirichlet(2), &TraceVector::new(CVector::zeros(2), psi.clone()).unwrap()).unwrap();
        assert!((f - &psi).norm() < 1e-15);
        let phi = CVector::from_vec(vec![c(0.5), c(3.0)]);
        let f =
            recover_f(&BoundaryPair::neumann(2), &TraceVector::new(phi.clone(), CVector::zeros(2)).unwrap()).unwrap();
        assert!((f + &phi).norm() < 1e-15);
        let bad = TraceVector::new(phi, CVector::zeros(2)).unwrap();
        assert!(matches!(recover_f(&BoundaryPair::dirichlet(2), &bad), Err(Error::TraceNotInPlane { .. })));
    }

    #[test]
    fn recover_f_when_aa_minus_bb_is_singular() {
        // f + ∂_n f = 0: AA* − BB* = 0 but the condition is perfectly valid
        let p = BoundaryPair::new(CMatrix::identity(2, 2), CMatrix::identity(2, 2)).unwrap();
        let r = check_hypothesis(&p, 1e-9).unwrap();
        assert!(r.passed);
        assert!(r.det_aa_minus_bb < 1e-15);
        let f = CVector::from_vec(vec![c(1.0), C64::new(0.0, 2.0)]);
        let back = recover_f(&p, &trace_of(&p, &f)).unwrap();
        assert!((back - f).norm() < 1e-14);
    }

    #[test]
    fn recover_f_agrees_with_difference_formula_when_defined() {
        let p = robin_interval_family().at(-1.0 / std::f64::consts::PI);
        let f = CVector::from_vec(vec![c(0.4), c(-1.1)]);
        let tr = trace_of(&p, &f);
        let ours = recover_f(&p, &tr).unwrap();
        let m = &p.a * p.a.adjoint() - &p.b * p.b.adjoint();
        let direct = m.lu().solve(&(&p.b * &tr.dirichlet + &p.a * &tr.neumann)).unwrap();
        assert!((ours - direct).norm() < 1e-13);
    }

    #[test]
    fn family_derivatives_are_consistent() {
        let fam = delta_star_family(3, OuterCondition::Robin(0.5)).unwrap();
        for t in [-2.0, 0.0, 1.5] {
            assert!(fam.derivative_consistency(t) < 1e-6);
        }
        assert!(robin_interval_family().derivative_consistency(0.3) < 1e-6);
        let numeric = BoundaryFamily::new("numeric", |t: f64| {
            BoundaryPair::robin(CMatrix::from_row_slice(1, 1, &[c(t * t)])).unwrap()
        });
        let (da, db) = numeric.derivative(1.5);
        assert!((da[(0, 0)] - c(3.0)).norm() < 1e-8);
        assert!(db.norm() == 0.0);
    }

    #[test]
    fn affine_family() {
        let fam = BoundaryFamily::affine(
            CMatrix::identity(1, 1),
            CMatrix::zeros(1, 1),
            CMatrix::zeros(1, 1),
            CMatrix::identity(1, 1),
        )
        .unwrap();
        let p = fam.at(2.0);
        assert_eq!(p.b[(0, 0)], c(2.0));
        assert!(fam.derivative_consistency(0.7) < 1e-8);
    }
}
