//! End-to-end checks of the index theorem, the eigenvalue derivative formula
//! and eigenvalue interlacing for δ-type stars.

mod hadamard;
mod interlace;
mod morse_box;

pub use hadamard::{hadamard_check, hadamard_formula, BranchSelector, HadamardReport};
pub use interlace::{interlacing_check, InterlaceReport, ProbeResult};
pub use morse_box::{maslov_box, BoxOptions, BoxReport, NormalizedCrossing, SideReport, SignCheck};

use crate::edge::gram_matrix;
use crate::graph::{MetricGraph, TraceVector};
use crate::spectral::{cauchy_coefficients, SecularSystem};
use crate::{Result, C64};

/// Simpson panels per potential piece for eigenfunction norms.
pub(crate) const QUADRATURE_PANELS: usize = 2048;

/// Trace of the L²-normalized eigenfunction at a simple eigenvalue, and the
/// norm of the unit-trace eigenfunction it was scaled from.
pub(crate) fn normalized_eigentrace(g: &MetricGraph, sys: &SecularSystem, lambda: f64) -> Result<(TraceVector, f64)> {
    let trace = sys.null_traces(lambda, 1).remove(0);
    let norm = gram_matrix(g, lambda, &[cauchy_coefficients(&trace)], QUADRATURE_PANELS)?[(0, 0)].re.sqrt();
    Ok((trace.scale(C64::new(1.0 / norm, 0.0)), norm))
}
