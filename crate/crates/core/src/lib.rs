//! Spectral theory of Schrödinger operators `-d²/dx² + q` on compact metric
//! graphs with general self-adjoint vertex conditions `A γ_D f + B γ_N f = 0`.
//!
//! The crate works entirely in the finite-dimensional trace space
//! `C^{4|E|} = C^{2|E|} ⊕ C^{2|E|}` (Dirichlet half, inward Neumann half).
//! Eigenvalues are intersections of two Lagrangian planes: the Cauchy-data
//! plane `K_λ` of all edgewise solutions and the vertex-condition plane
//! `L = ran(-B*, A*)`. On top of that it provides
//!
//! * [`symplectic`]: the form ω, Lagrangian frames, the unitary (Souriau)
//!   representation, intersections and the Grassmannian metric;
//! * [`maslov`]: Maslov indices of paths of Lagrangian planes, crossing forms
//!   and the two-path index;
//! * [`spectral`]: eigenvalues, Morse indices and spectral flow;
//! * [`verify`]: the Morse–Maslov box, the Hadamard derivative formula and
//!   the δ-star interlacing check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod edge;
pub mod error;
pub mod graph;
mod linalg;
pub mod maslov;
pub mod spectral;
pub mod symplectic;
pub mod verify;
pub mod vertex;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;

pub use graph::{Edge, Endpoint, MetricGraph, Segment, TraceVector};
pub use maslov::{GridControl, LagrangianPath, MaslovReport};
pub use spectral::{SpectralOptions, Spectrum};
pub use symplectic::{LagrangianFrame, SymplecticSpace};
pub use vertex::{BoundaryFamily, BoundaryPair, OuterCondition};
