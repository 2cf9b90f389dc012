//! Compact metric graphs and the layout of the trace space.
//!
//! Every edge `e` is oriented from endpoint `a` to endpoint `b`. Boundary
//! values are stored with endpoint `a` of edge `i` at index `2i` and endpoint
//! `b` at `2i + 1`. Normal derivatives are taken in the inward direction:
//! `+f'(a)` at the start and `-f'(b)` at the end of each edge.

use serde::{Deserialize, Serialize};

use crate::{CVector, Error, Result, C64};

/// One piece of a piecewise-constant potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Share of the edge length covered by this piece.
    pub fraction: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub length: f64,
    /// Pieces ordered from endpoint `a` to endpoint `b`.
    pub potential: Vec<Segment>,
}

impl Edge {
    pub fn new(length: f64, potential: Vec<Segment>) -> Self {
        Self { length, potential }
    }

    /// Edge with a constant potential.
    pub fn constant(length: f64, q: f64) -> Self {
        Self::new(length, vec![Segment { fraction: 1.0, value: q }])
    }

    /// Edge with `q ≡ 0`.
    pub fn free(length: f64) -> Self {
        Self::constant(length, 0.0)
    }

    /// Absolute (length, value) pieces from `a` to `b`.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.potential.iter().map(move |s| (s.fraction * self.length, s.value))
    }

    pub fn max_abs_potential(&self) -> f64 {
        self.potential.iter().map(|s| s.value.abs()).fold(0.0, f64::max)
    }

    pub fn min_potential(&self) -> f64 {
        self.potential.iter().map(|s| s.value).fold(f64::INFINITY, f64::min)
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidGraph(format!("edge {index}: non-positive length {}", self.length)));
        }
        if self.potential.is_empty() {
            return Err(Error::InvalidGraph(format!("edge {index}: empty potential")));
        }
        let mut total = 0.0;
        for s in &self.potential {
            if !(s.fraction.is_finite() && s.fraction > 0.0) {
                return Err(Error::InvalidGraph(format!("edge {index}: non-positive segment fraction {}", s.fraction)));
            }
            if !s.value.is_finite() {
                return Err(Error::InvalidGraph(format!("edge {index}: potential value is not finite")));
            }
            total += s.fraction;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidGraph(format!("edge {index}: fractions do not sum to 1 (sum {total})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGraph {
    pub edges: Vec<Edge>,
    /// Vertex id of every boundary point, indexed like the trace space.
    /// Builders fill it in; the operator itself only sees `(A, B)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex_map: Option<Vec<usize>>,
}

impl MetricGraph {
    pub fn new(edges: Vec<Edge>) -> Self {
        Self { edges, vertex_map: None }
    }

    /// Single edge `[0, length]` with constant potential `q`.
    pub fn interval(length: f64, q: f64) -> Self {
        Self::new(vec![Edge::constant(length, q)])
    }

    /// Returns the graph unchanged if every invariant holds, otherwise the
    /// first violation.
    pub fn validate(self) -> Result<Self> {
        if self.edges.is_empty() {
            return Err(Error::InvalidGraph("graph has no edges".into()));
        }
        for (i, e) in self.edges.iter().enumerate() {
            e.validate(i)?;
        }
        if let Some(map) = &self.vertex_map {
            if map.len() != self.boundary_dim() {
                return Err(Error::InvalidGraph(format!(
                    "vertex map has {} entries, expected {}",
                    map.len(),
                    self.boundary_dim()
                )));
            }
        }
        Ok(self)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of boundary points, `2|E|`.
    pub fn boundary_dim(&self) -> usize {
        2 * self.edges.len()
    }

    /// Dimension of the trace space, `4|E|`.
    pub fn trace_dim(&self) -> usize {
        4 * self.edges.len()
    }

    pub fn boundary_index(&self, edge: usize, endpoint: Endpoint) -> Result<usize> {
        if edge >= self.edges.len() {
            return Err(Error::EdgeOutOfRange { edge, count: self.edges.len() });
        }
        Ok(match endpoint {
            Endpoint::A => 2 * edge,
            Endpoint::B => 2 * edge + 1,
        })
    }

    pub fn max_abs_potential(&self) -> f64 {
        self.edges.iter().map(Edge::max_abs_potential).fold(0.0, f64::max)
    }

    pub fn min_potential(&self) -> f64 {
        self.edges.iter().map(Edge::min_potential).fold(f64::INFINITY, f64::min)
    }

    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }
}

/// Star graph with every edge starting (endpoint `a`) at the center.
///
/// `q` holds one constant potential value per edge. The center gets vertex
/// id 0 and the outer endpoint of edge `i` gets id `i + 1`.
pub fn make_star(degree: usize, lengths: &[f64], q: &[f64]) -> Result<MetricGraph> {
    if degree < 2 {
        return Err(Error::InvalidGraph("degree ≥ 2 required".into()));
    }
    if lengths.len() != degree {
        return Err(Error::InvalidGraph(format!(
            "length list size mismatch: {} lengths for degree {degree}",
            lengths.len()
        )));
    }
    if q.len() != degree {
        return Err(Error::InvalidGraph(format!(
            "potential list size mismatch: {} values for degree {degree}",
            q.len()
        )));
    }
    let edges = lengths.iter().zip(q).map(|(&l, &v)| Edge::constant(l, v)).collect();
    let vertex_map = (0..degree).flat_map(|i| [0, i + 1]).collect();
    MetricGraph { edges, vertex_map: Some(vertex_map) }.validate()
}

/// Element of the trace space: boundary values and inward derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub dirichlet: CVector,
    pub neumann: CVector,
}

impl TraceVector {
    pub fn new(dirichlet: CVector, neumann: CVector) -> Result<Self> {
        if dirichlet.len() != neumann.len() {
            return Err(Error::DimensionMismatch { expected: dirichlet.len(), got: neumann.len() });
        }
        Ok(Self { dirichlet, neumann })
    }

    /// Splits a stacked `[γ_D; γ_N]` vector.
    pub fn from_stacked(v: &CVector) -> Result<Self> {
        if !v.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch { expected: v.len() + 1, got: v.len() });
        }
        let m = v.len() / 2;
        Ok(Self { dirichlet: v.rows(0, m).into_owned(), neumann: v.rows(m, m).into_owned() })
    }

    pub fn stacked(&self) -> CVector {
        let m = self.dirichlet.len();
        let mut v = CVector::zeros(2 * m);
        v.rows_mut(0, m).copy_from(&self.dirichlet);
        v.rows_mut(m, m).copy_from(&self.neumann);
        v
    }

    pub fn boundary_dim(&self) -> usize {
        self.dirichlet.len()
    }

    /// Cauchy data `(f(a), f'(a))` of every edge, read off the `a` entries.
    pub fn cauchy_data_at_a(&self) -> Vec<(C64, C64)> {
        (0..self.dirichlet.len() / 2).map(|e| (self.dirichlet[2 * e], self.neumann[2 * e])).collect()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dirichlet: self.dirichlet.map(|x| x * c), neumann: self.neumann.map(|x| x * c) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_edge_is_valid() {
        let g = MetricGraph::interval(PI, 0.0).validate().unwrap();
        assert_eq!(g.boundary_dim(), 2);
        assert_eq!(g.trace_dim(), 4);
    }

    #[test]
    fn zero_length_rejected() {
        let err = MetricGraph::new(vec![Edge::free(0.0)]).validate().unwrap_err();
        assert!(err.to_string().contains("non-positive length"), "{err}");
    }

    #[test]
    fn bad_fractions_rejected() {
        let e = Edge::new(1.0, vec![Segment { fraction: 0.5, value: 0.0 }, Segment { fraction: 0.4, value: 1.0 }]);
        let err = MetricGraph::new(vec![e]).validate().unwrap_err();
        assert!(err.to_string().contains("fractions do not sum to 1"), "{err}");
    }

    #[test]
    fn non_finite_potential_rejected() {
        let err = MetricGraph::new(vec![Edge::constant(1.0, f64::NAN)]).validate().unwrap_err();
        assert!(err.to_string().contains("not finite"));
    }

    #[test]
    fn empty_graph_rejected() {
        assert!(MetricGraph::new(vec![]).validate().is_err());
    }

    #[test]
    fn boundary_index_layout() {
        let g = MetricGraph::new(vec![Edge::free(1.0), Edge::free(2.0), Edge::free(3.0)]);
        assert_eq!(g.boundary_index(0, Endpoint::A).unwrap(), 0);
        assert_eq!(g.boundary_index(0, Endpoint::B).unwrap(), 1);
        assert_eq!(g.boundary_index(2, Endpoint::A).unwrap(), 4);
        assert!(matches!(g.boundary_index(3, Endpoint::A), Err(Error::EdgeOutOfRange { .. })));
        let mut seen: Vec<usize> =
            (0..3).flat_map(|e| [Endpoint::A, Endpoint::B].map(|p| g.boundary_index(e, p).unwrap())).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn star_builder() {
        let g = make_star(3, &[1.0, 2f64.sqrt(), PI / 2.0], &[0.0; 3]).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.boundary_dim(), 6);
        assert_eq!(g.vertex_map.as_deref(), Some(&[0, 1, 0, 2, 0, 3][..]));
        let g2 = make_star(2, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(g2.edge_count(), 2);
        let err = make_star(1, &[1.0], &[0.0]).unwrap_err();
        assert!(err.to_string().contains("degree ≥ 2 required"));
        assert!(make_star(3, &[1.0, 1.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn trace_vector_round_trip() {
        let v = CVector::from_fn(4, |i, _| C64::new(i as f64, -(i as f64)));
        let t = TraceVector::from_stacked(&v).unwrap();
        assert_eq!(t.stacked(), v);
        assert_eq!(t.cauchy_data_at_a(), vec![(v[0], v[2])]);
    }
}
