use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge index {edge} out of range (graph has {count} edges)")]
    EdgeOutOfRange { edge: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not a Lagrangian frame: {0}")]
    NotLagrangian(String),

    #[error("vertex conditions violate the self-adjointness hypothesis: {0}")]
    Hypothesis(String),

    #[error("trace is not in the plane of the vertex conditions (residual {residual:.3e})")]
    TraceNotInPlane { residual: f64 },

    #[error("grid too coarse: no admissible partition near s = {at} after the refinement budget")]
    GridTooCoarse { at: f64 },

    #[error("no crossing at s = {at}")]
    NoCrossing { at: f64 },

    #[error("window endpoint {at} is an eigenvalue (gap {gap:.3e}); perturb the window")]
    EndpointEigenvalue { at: f64, gap: f64 },

    #[error("zero is an eigenvalue (gap {gap:.3e})")]
    ZeroEigenvalue { gap: f64 },

    #[error("spectral flow mismatch: Morse difference {morse} but branch tracking gives {tracked}")]
    FlowMismatch { morse: i32, tracked: i32, trace: String },

    #[error("floor certificate failed: {0}")]
    FloorCertificate(String),

    #[error("eigenvalue is not simple (multiplicity {multiplicity})")]
    NotSimple { multiplicity: usize },

    #[error("no eigenvalue branch: {0}")]
    NoBranch(String),

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
