use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty mesh: {0}")]
    EmptyMesh(&'static str),
    #[error("unsupported dimensions: intrinsic {intrinsic}, ambient {ambient}")]
    InvalidDimension { intrinsic: usize, ambient: usize },
    #[error("vertex index {index} out of range in cell {cell} ({vertices} vertices)")]
    IndexOutOfRange { cell: usize, index: usize, vertices: usize },
    #[error("BoundaryDetected: face {face:?} has {cofaces} cofaces (expected 2)")]
    BoundaryDetected { face: Vec<usize>, cofaces: usize },
    #[error("DegenerateCell: cell {cell} has measure {measure:e}")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("vertex {0} is not referenced by any cell")]
    UnreferencedVertex(usize),
    #[error("UnsupportedSpec: {0}")]
    UnsupportedSpec(String),
    #[error("IllConditionedFit at vertex {vertex}: {reason}")]
    IllConditionedFit { vertex: usize, reason: String },
    #[error("NonpositiveDensity: value {value:e} at vertex {vertex}")]
    NonpositiveDensity { vertex: usize, value: f64 },
    #[error("field length {got} does not match vertex count {expected}")]
    FieldLength { expected: usize, got: usize },
    #[error("IncompatibleRhs: component {component} sums to {sum:e} (allowed {allowed:e})")]
    IncompatibleRhs { component: usize, sum: f64, allowed: f64 },
    #[error("NoConvergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("DisconnectedInput: mesh has {0} components")]
    DisconnectedInput(usize),
    #[error("QuadratureUnderflow: fiber integral {got:e} vs expected {expected:e}")]
    QuadratureUnderflow { got: f64, expected: f64 },
    #[error("MixedForms: cannot combine reports of different forms or dimensions")]
    MixedForms,
    #[error("Overflow: exp(g) not finite at vertex {0}")]
    Overflow(usize),
    #[error("Diverged: deficit {0:e}")]
    Diverged(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
