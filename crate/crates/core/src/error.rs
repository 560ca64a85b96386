use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),

    #[error("unsupported dimension {dim}: {context}")]
    UnsupportedDimension { dim: usize, context: &'static str },

    #[error("kernel is singular at origin")]
    SingularAtOrigin,

    #[error("{0} requires integrable kernel")]
    NonIntegrableKernel(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step too large: {step} exceeds the stability bound {bound}")]
    StepTooLarge { step: f64, bound: f64 },

    #[error("instance too large: {candidates} candidates exceeds the bound {bound}")]
    InstanceTooLarge { candidates: f64, bound: f64 },

    #[error("infeasible density: {0}")]
    Infeasible(String),

    #[error("no samples")]
    NoSamples,

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
