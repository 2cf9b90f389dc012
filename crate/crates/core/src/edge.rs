//! Edgewise solutions of `−f″ + q f = λ f` for piecewise-constant `q`, and the
//! Cauchy-data plane `K_λ` they span in the trace space.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::Serialize;

use crate::graph::{Edge, MetricGraph};
use crate::symplectic::LagrangianFrame;
use crate::{CMatrix, Error, Result, C64};

/// Below this value of `|z|h²` the propagator is evaluated by its Taylor
/// series to avoid the removable singularity of `sin(√z h)/√z`.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Exact propagator of Cauchy data `(y, y′)` across a piece of length `h`
/// with `z = λ − q`.
pub fn segment_propagator(z: f64, h: f64) -> Matrix2<f64> {
    let zh2 = z * h * h;
    if zh2.abs() < SERIES_THRESHOLD {
        // cos(√z h) and sin(√z h)/√z, four terms each
        let c = 1.0 - zh2 / 2.0 + zh2 * zh2 / 24.0 - zh2 * zh2 * zh2 / 720.0;
        let s = h * (1.0 - zh2 / 6.0 + zh2 * zh2 / 120.0 - zh2 * zh2 * zh2 / 5040.0);
        return Matrix2::new(c, s, -z * s, c);
    }
    if z > 0.0 {
        let k = z.sqrt();
        let (sn, cs) = (k * h).sin_cos();
        Matrix2::new(cs, sn / k, -k * sn, cs)
    } else {
        let k = (-z).sqrt();
        let (sh, ch) = ((k * h).sinh(), (k * h).cosh());
        Matrix2::new(ch, sh / k, k * sh, ch)
    }
}

/// `M_e(λ) = [[c(ℓ), s(ℓ)], [c′(ℓ), s′(ℓ)]]` for the fundamental system
/// normalized at endpoint `a`.
pub fn fundamental_matrix(edge: &Edge, lambda: f64) -> Matrix2<f64> {
    edge.pieces().fold(Matrix2::identity(), |m, (h, q)| segment_propagator(lambda - q, h) * m)
}

/// Transfer matrix from `a` to the point at distance `x` along the edge.
pub fn propagate_to(edge: &Edge, lambda: f64, x: f64) -> Matrix2<f64> {
    let mut m = Matrix2::identity();
    let mut start = 0.0;
    for (h, q) in edge.pieces() {
        if x <= start {
            break;
        }
        let step = (x - start).min(h);
        m = segment_propagator(lambda - q, step) * m;
        start += h;
    }
    m
}

/// Orthonormal 4×2 frame of all Cauchy-data pairs of one piece, rows
/// `(y(0), y′(0), y(h), y′(h))`.
fn segment_plane(z: f64, h: f64) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(4, 2);
    let k = (-z).max(0.0).sqrt();
    if z < 0.0 && k * h > 1.0 {
        // decaying exponentials from either end: no cancellation for large kh
        let d = (-k * h).exp();
        f.set_column(0, &nalgebra::DVector::from_column_slice(&[1.0, -k, d, -k * d]));
        f.set_column(1, &nalgebra::DVector::from_column_slice(&[d, k * d, 1.0, k]));
    } else {
        let t = segment_propagator(z, h);
        f[(0, 0)] = 1.0;
        f[(1, 1)] = 1.0;
        for i in 0..2 {
            for j in 0..2 {
                f[(2 + i, j)] = t[(i, j)];
            }
        }
    }
    f.qr().q()
}

/// Chains two pieces: pairs whose right data on the first piece equal the
/// left data on the second.
fn compose_planes(p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> DMatrix<f64> {
    let mut coupling = DMatrix::zeros(4, 4);
    coupling.view_mut((0, 0), (2, 2)).copy_from(&p1.view((2, 0), (2, 2)));
    coupling.view_mut((0, 2), (2, 2)).copy_from(&(-p2.view((0, 0), (2, 2))));
    let svd = crate::linalg::capped_svd(coupling, false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut null = DMatrix::zeros(4, 2);
    for (col, &i) in order.iter().take(2).enumerate() {
        null.set_column(col, &v_t.row(i).transpose());
    }
    let mut out = DMatrix::zeros(4, 2);
    out.view_mut((0, 0), (2, 2)).copy_from(&(p1.view((0, 0), (2, 2)) * null.view((0, 0), (2, 2))));
    out.view_mut((2, 0), (2, 2)).copy_from(&(p2.view((2, 0), (2, 2)) * null.view((2, 0), (2, 2))));
    out.qr().q()
}

/// Orthonormal frame of the Cauchy-data plane of one edge, rows
/// `(f(a), f′(a), f(b), f′(b))`. Stable for strongly negative `λ − q`.
pub fn edge_cauchy_plane(edge: &Edge, lambda: f64) -> DMatrix<f64> {
    let mut pieces = edge.pieces();
    let (h0, q0) = pieces.next().expect("validated edge has a potential");
    pieces.fold(segment_plane(lambda - q0, h0), |acc, (h, q)| compose_planes(&acc, &segment_plane(lambda - q, h)))
}

/// Frame of `K_λ` whose columns are the traces of `c_e` and `s_e`
/// (two columns per edge, in edge order).
pub fn k_lambda_frame(g: &MetricGraph, lambda: f64) -> LagrangianFrame {
    let n = g.edge_count();
    let m = 2 * n;
    let mut f = CMatrix::zeros(2 * m, m);
    for (e, edge) in g.edges.iter().enumerate() {
        let t = fundamental_matrix(edge, lambda);
        for (col, j) in [(2 * e, 0), (2 * e + 1, 1)] {
            let start = if j == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            f[(2 * e, col)] = C64::new(start.0, 0.0);
            f[(2 * e + 1, col)] = C64::new(t[(0, j)], 0.0);
            f[(m + 2 * e, col)] = C64::new(start.1, 0.0);
            f[(m + 2 * e + 1, col)] = C64::new(-t[(1, j)], 0.0);
        }
    }
    LagrangianFrame::new_unchecked(f)
}

/// Orthonormal frame of `K_λ`, block-diagonal over edges. Spans the same
/// plane as [`k_lambda_frame`] but stays well conditioned far below the
/// spectrum.
pub fn k_lambda_plane(g: &MetricGraph, lambda: f64) -> LagrangianFrame {
    let n = g.edge_count();
    let m = 2 * n;
    let mut f = CMatrix::zeros(2 * m, m);
    for (e, edge) in g.edges.iter().enumerate() {
        let p = edge_cauchy_plane(edge, lambda);
        for j in 0..2 {
            let col = 2 * e + j;
            f[(2 * e, col)] = C64::new(p[(0, j)], 0.0);
            f[(2 * e + 1, col)] = C64::new(p[(2, j)], 0.0);
            f[(m + 2 * e, col)] = C64::new(p[(1, j)], 0.0);
            f[(m + 2 * e + 1, col)] = C64::new(-p[(3, j)], 0.0);
        }
    }
    LagrangianFrame::new_unchecked(f)
}

/// Value and derivative at `x` of the solution with Cauchy data `(α, β)` at `a`.
pub fn evaluate(edge: &Edge, lambda: f64, data: (C64, C64), x: f64) -> (C64, C64) {
    let t = propagate_to(edge, lambda, x);
    (data.0 * t[(0, 0)] + data.1 * t[(0, 1)], data.0 * t[(1, 0)] + data.1 * t[(1, 1)])
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeSamples {
    pub x: Vec<f64>,
    pub value: Vec<C64>,
    pub derivative: Vec<C64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionSamples {
    pub edges: Vec<EdgeSamples>,
    pub l2_norm: f64,
}

/// Samples `f_e = α_e c_e + β_e s_e` (coefficients interleaved as
/// `α_0, β_0, α_1, β_1, …`) on a uniform grid of every edge and computes
/// `‖f‖_{L²(Γ)}`.
///
/// The norm uses composite Simpson quadrature on each potential piece
/// separately so the integrand is smooth on every panel.
pub fn assemble_eigenfunction(
    g: &MetricGraph,
    lambda: f64,
    coeffs: &[C64],
    samples_per_edge: usize,
) -> Result<EigenfunctionSamples> {
    if samples_per_edge < 5 {
        return Err(Error::InvalidArgument(format!("samples_per_edge must be ≥ 5, got {samples_per_edge}")));
    }
    if coeffs.len() != g.boundary_dim() {
        return Err(Error::DimensionMismatch { expected: g.boundary_dim(), got: coeffs.len() });
    }
    let edges = g
        .edges
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let data = (coeffs[2 * e], coeffs[2 * e + 1]);
            let x: Vec<f64> =
                (0..samples_per_edge).map(|j| edge.length * j as f64 / (samples_per_edge - 1) as f64).collect();
            let (value, derivative) = x.iter().map(|&xi| evaluate(edge, lambda, data, xi)).unzip();
            EdgeSamples { x, value, derivative }
        })
        .collect();
    let gram = gram_matrix(g, lambda, &[coeffs.to_vec()], 2 * samples_per_edge)?;
    Ok(EigenfunctionSamples { edges, l2_norm: gram[(0, 0)].re.max(0.0).sqrt() })
}

/// Gram matrix `G_jk = ∫_Γ f_j conj(f_k)` of solutions given by coefficient
/// vectors as in [`assemble_eigenfunction`].
pub fn gram_matrix(g: &MetricGraph, lambda: f64, coeff_sets: &[Vec<C64>], panels: usize) -> Result<CMatrix> {
    for c in coeff_sets {
        if c.len() != g.boundary_dim() {
            return Err(Error::DimensionMismatch { expected: g.boundary_dim(), got: c.len() });
        }
    }
    let panels = (panels.max(512) + 1) & !1;
    let k = coeff_sets.len();
    let mut gram = CMatrix::zeros(k, k);
    for (e, edge) in g.edges.iter().enumerate() {
        let mut data: Vec<Vector2<C64>> = coeff_sets.iter().map(|c| Vector2::new(c[2 * e], c[2 * e + 1])).collect();
        for (h, q) in edge.pieces() {
            let step = h / panels as f64;
            let z = lambda - q;
            let values: Vec<Vec<C64>> = data
                .iter()
                .map(|d| {
                    (0..=panels)
                        .map(|j| {
                            let t = segment_propagator(z, step * j as f64);
                            d[0] * t[(0, 0)] + d[1] * t[(0, 1)]
                        })
                        .collect()
                })
                .collect();
            for a in 0..k {
                for b in 0..k {
                    let acc: C64 = values[a]
                        .iter()
                        .zip(&values[b])
                        .enumerate()
                        .map(|(j, (u, v))| {
                            let w = if j == 0 || j == panels {
                                1.0
                            } else if j % 2 == 1 {
                                4.0
                            } else {
                                2.0
                            };
                            u * v.conj() * w
                        })
                        .sum();
                    gram[(a, b)] += acc * (step / 3.0);
                }
            }
            let t = segment_propagator(z, h).map(|x| C64::new(x, 0.0));
            for d in data.iter_mut() {
                *d = t * *d;
            }
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Segment;
    use crate::symplectic::{intersection_dim, is_lagrangian, plane_distance, LagrangianFrame, DEFAULT_TOL_PHASE};
    use std::f64::consts::PI;

    fn close(a: &Matrix2<f64>, b: &Matrix2<f64>, tol: f64) -> bool {
        (a - b).abs().max() < tol
    }

    #[test]
    fn free_edge_at_zero_is_linear() {
        let m = fundamental_matrix(&Edge::free(2.5), 0.0);
        assert!(close(&m, &Matrix2::new(1.0, 2.5, 0.0, 1.0), 1e-15));
    }

    #[test]
    fn free_edge_at_one_over_pi() {
        let m = fundamental_matrix(&Edge::free(PI), 1.0);
        assert!(close(&m, &Matrix2::new(-1.0, 0.0, 0.0, -1.0), 1e-15));
    }

    #[test]
    fn constant_potential_shift() {
        for (lambda, q) in [(3.0, 1.2), (-2.0, 0.5), (0.7, 0.7)] {
            let a = fundamental_matrix(&Edge::constant(1.3, q), lambda);
            let b = fundamental_matrix(&Edge::free(1.3), lambda - q);
            assert!(close(&a, &b, 1e-14));
        }
    }

    #[test]
    fn series_matches_closed_form_at_tiny_z() {
        for z in [1e-8f64, -1e-8] {
            let h = 1.0;
            let k = z.abs().sqrt();
            let exact = if z > 0.0 {
                Matrix2::new((k * h).cos(), (k * h).sin() / k, -k * (k * h).sin(), (k * h).cos())
            } else {
                Matrix2::new((k * h).cosh(), (k * h).sinh() / k, k * (k * h).sinh(), (k * h).cosh())
            };
            let series = segment_propagator(z, h);
            assert!(close(&exact, &series, 1e-12), "z = {z}");
        }
    }

    #[test]
    fn interval_frame_columns() {
        let g = MetricGraph::interval(PI, 0.0);
        let f = k_lambda_frame(&g, 1.0);
        let m = f.matrix();
        let expect = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        for r in 0..4 {
            for c in 0..2 {
                assert!((m[(r, c)] - C64::new(expect[r][c], 0.0)).norm() < 1e-15, "({r},{c})");
            }
        }
        assert!(is_lagrangian(m, 1e-9).is_lagrangian);
        let dirichlet = LagrangianFrame::vertical(2);
        assert_eq!(intersection_dim(&f, &dirichlet, DEFAULT_TOL_PHASE).unwrap(), 1);
    }

    #[test]
    fn stable_plane_spans_same_plane() {
        let e = Edge::new(
            1.7,
            vec![
                Segment { fraction: 0.3, value: 2.0 },
                Segment { fraction: 0.5, value: -1.0 },
                Segment { fraction: 0.2, value: 4.0 },
            ],
        );
        let g = MetricGraph::new(vec![e, Edge::free(0.9)]);
        for lambda in [-20.0, -3.0, 0.0, 0.5, 7.0, 40.0] {
            let a = k_lambda_frame(&g, lambda);
            let b = k_lambda_plane(&g, lambda);
            assert!(plane_distance(&a, &b).unwrap() < 1e-10, "λ = {lambda}");
            assert!(is_lagrangian(b.matrix(), 1e-12).is_lagrangian);
        }
    }

    #[test]
    fn stable_plane_far_below_spectrum() {
        // kℓ = 100: the c/s frame is useless here, the decaying basis is exact
        let g = MetricGraph::interval(1.0, 0.0);
        let p = k_lambda_plane(&g, -1e4);
        assert!(is_lagrangian(p.matrix(), 1e-12).is_lagrangian);
        // limit plane: γ_N f = −k γ_D f at both ends
        let m = p.matrix();
        for c in 0..2 {
            let (d0, d1, n0, n1) = (m[(0, c)], m[(1, c)], m[(2, c)], m[(3, c)]);
            assert!((n0 + d0 * 100.0).norm() < 1e-10 * (1.0 + n0.norm()) + 1e-12);
            assert!((n1 + d1 * 100.0).norm() < 1e-10 * (1.0 + n1.norm()) + 1e-12);
        }
    }

    #[test]
    fn eigenfunction_sine() {
        let g = MetricGraph::interval(PI, 0.0);
        let s = assemble_eigenfunction(&g, 1.0, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], 9).unwrap();
        assert!((s.l2_norm - (PI / 2.0).sqrt()).abs() < 1e-10);
        assert!((s.edges[0].value[4] - C64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((s.edges[0].derivative[0] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn eigenfunction_zero_and_linear() {
        let g = MetricGraph::interval(PI, 0.0);
        let zero = C64::new(0.0, 0.0);
        let s = assemble_eigenfunction(&g, 0.5, &[zero, zero], 5).unwrap();
        assert_eq!(s.l2_norm, 0.0);
        let s = assemble_eigenfunction(&g, 0.0, &[C64::new(1.0, 0.0), C64::new(-1.0 / PI, 0.0)], 11).unwrap();
        // ∫₀^π (1 − x/π)² dx = π/3
        assert!((s.l2_norm.powi(2) - PI / 3.0).abs() < 1e-12);
        assert!(assemble_eigenfunction(&g, 0.0, &[zero, zero], 4).is_err());
    }
}
