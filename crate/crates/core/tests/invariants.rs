use nalgebra::Matrix2;
use proptest::prelude::*;
use qgraph_core::edge::fundamental_matrix;
use qgraph_core::graph::make_star;
use qgraph_core::spectral::secular_gap;
use qgraph_core::symplectic::{intersection_dim, omega, plane_distance, souriau_unitary, DEFAULT_TOL_PHASE};
use qgraph_core::vertex::{check_hypothesis, l_frame, recover_f, trace_of, BoundaryPair};
use qgraph_core::{CMatrix, CVector, Edge, LagrangianFrame, Segment, C64};

fn cmatrix(n: usize, k: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0..1.0f64, 2 * n * k)
        .prop_map(move |v| CMatrix::from_fn(n, k, |i, j| C64::new(v[2 * (i * k + j)], v[2 * (i * k + j) + 1])))
}

fn cvector(n: usize) -> impl Strategy<Value = CVector> {
    cmatrix(n, 1).prop_map(|m| m.column(0).into_owned())
}

fn unitary(n: usize) -> impl Strategy<Value = CMatrix> {
    cmatrix(n, n).prop_map(move |m| (m + CMatrix::identity(n, n) * C64::new(0.1, 0.0)).qr().q())
}

/// Well-conditioned invertible matrix: a unitary times a positive diagonal.
fn invertible(n: usize) -> impl Strategy<Value = CMatrix> {
    (unitary(n), prop::collection::vec(0.5..2.0f64, n)).prop_map(|(u, d)| {
        let diag = CMatrix::from_diagonal(&CVector::from_iterator(d.len(), d.iter().map(|&x| C64::new(x, 0.0))));
        u * diag
    })
}

/// Vertex conditions whose plane is the one with unitary `w`, written in the
/// basis `c`.
fn pair_from(w: &CMatrix, c: &CMatrix) -> BoundaryPair {
    let frame = LagrangianFrame::from_unitary(w);
    let (x, y) = (frame.top(), frame.bottom());
    BoundaryPair::new(c * y.adjoint(), -(c * x.adjoint())).unwrap()
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn souriau_depends_only_on_the_plane(w in unitary(3), g in invertible(3)) {
        let f = LagrangianFrame::from_unitary(&w);
        let w1 = souriau_unitary(&f).unwrap();
        let w2 = souriau_unitary(&f.reframed(&g)).unwrap();
        prop_assert!(max_abs(&(&w1 - &w2)) < 1e-9);
        prop_assert!(max_abs(&(&w1 - &w)) < 1e-9);
    }

    #[test]
    fn x_minus_iy_is_unitary_on_orthonormal_frames(w in unitary(4), g in invertible(4)) {
        let f = LagrangianFrame::from_unitary(&w).reframed(&g).orthonormalized();
        let m = f.top() - f.bottom() * C64::new(0.0, 1.0);
        let defect = &m.adjoint() * &m - CMatrix::identity(4, 4);
        prop_assert!(max_abs(&defect) < 1e-10);
        let w_back = souriau_unitary(&f).unwrap();
        let u = &w_back.adjoint() * &w_back - CMatrix::identity(4, 4);
        prop_assert!(max_abs(&u) < 1e-10);
    }

    #[test]
    fn omega_is_antihermitian(u in cvector(6), v in cvector(6)) {
        let a = omega(&u, &v).unwrap();
        let b = omega(&v, &u).unwrap();
        prop_assert!((a + b.conj()).norm() < 1e-12);
        prop_assert!(omega(&u, &u).unwrap().re.abs() < 1e-12);
    }

    #[test]
    fn lagrangian_frames_are_isotropic(w in unitary(3), a in cmatrix(3, 1), b in cmatrix(3, 1)) {
        let f = LagrangianFrame::from_unitary(&w);
        let u = f.matrix() * a;
        let v = f.matrix() * b;
        prop_assert!(omega(&u.column(0).into_owned(), &v.column(0).into_owned()).unwrap().norm() < 1e-12);
    }

    #[test]
    fn plane_meets_itself_fully(w in unitary(4), g in invertible(4)) {
        let f = LagrangianFrame::from_unitary(&w);
        prop_assert_eq!(intersection_dim(&f, &f.reframed(&g), DEFAULT_TOL_PHASE).unwrap(), 4);
        prop_assert!(plane_distance(&f, &f.reframed(&g)).unwrap() < 1e-9);
    }

    #[test]
    fn plane_distance_is_a_metric(w1 in unitary(3), w2 in unitary(3), w3 in unitary(3)) {
        let (f1, f2, f3) = (
            LagrangianFrame::from_unitary(&w1),
            LagrangianFrame::from_unitary(&w2),
            LagrangianFrame::from_unitary(&w3),
        );
        let d12 = plane_distance(&f1, &f2).unwrap();
        let d21 = plane_distance(&f2, &f1).unwrap();
        let d13 = plane_distance(&f1, &f3).unwrap();
        let d23 = plane_distance(&f2, &f3).unwrap();
        prop_assert!((d12 - d21).abs() < 1e-12);
        prop_assert!(d13 <= d12 + d23 + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d12));
    }

    #[test]
    fn recover_f_inverts_trace_of(w in unitary(4), c in invertible(4), f in cvector(4)) {
        let p = pair_from(&w, &c);
        prop_assert!(check_hypothesis(&p, 1e-9).unwrap().passed);
        let tr = trace_of(&p, &f);
        prop_assert!(p.residual(&tr).unwrap() < 1e-10 * (1.0 + f.norm()));
        prop_assert!(l_frame(&p).unwrap().relative_residual(&tr.stacked()) < 1e-10);
        let back = recover_f(&p, &tr).unwrap();
        prop_assert!((back - &f).norm() < 1e-9 * (1.0 + f.norm()));
    }

    #[test]
    fn secular_gap_ignores_the_vertex_frame(
        w in unitary(4),
        c in invertible(4),
        lengths in prop::collection::vec(0.3..2.0f64, 2),
        lambda in -3.0..40.0f64,
    ) {
        let g = make_star(2, &lengths, &[0.0, 0.0]).unwrap();
        let p = pair_from(&w, &CMatrix::identity(4, 4));
        let pc = pair_from(&w, &c);
        let gap = secular_gap(&g, &p, lambda).unwrap();
        let gap_c = secular_gap(&g, &pc, lambda).unwrap();
        prop_assert!((gap - gap_c).abs() < 1e-9);
    }

    #[test]
    fn wronskian_is_one(
        lambda in -5.0..100.0f64,
        length in 0.1..2.0f64,
        values in prop::collection::vec(-5.0..5.0f64, 1..4),
    ) {
        let share = 1.0 / values.len() as f64;
        let edge = Edge::new(length, values.iter().map(|&value| Segment { fraction: share, value }).collect());
        let m: Matrix2<f64> = fundamental_matrix(&edge, lambda);
        let scale = m.norm_squared();
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12 * (1.0 + scale));
    }
}
