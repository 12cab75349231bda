use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown example geometry `{0}`")]
    UnknownExample(String),

    #[error("resolution {got} is too small (minimum {min})")]
    ResolutionTooSmall { got: usize, min: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("node {index}: {reason}")]
    InvalidNode { index: usize, reason: String },

    #[error("nodes {first} and {second} coincide (distance {distance:e})")]
    DuplicateNode {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("row {row}: unknown label `{label}` (expected F, Dc or probe)")]
    UnknownLabel { row: usize, label: String },

    #[error("label class {0} has fewer than two nodes")]
    SingletonClass(String),

    #[error("coincident points passed to the kernel")]
    CoincidentPoints,

    #[error("alpha = {alpha} outside (0, 2] or dimension {dim} < 3")]
    InvalidKernelParameters { alpha: f64, dim: usize },

    #[error("positive definiteness not certified after {attempts} escalations (last pivot {pivot:e})")]
    NotPositiveDefinite { attempts: usize, pivot: f64 },

    #[error("node index {index} out of range for operator of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("measure is bound to a different cloud or operator ({0})")]
    CloudMismatch(String),

    #[error("infeasible constraint: caps sum to {caps_sum} but mass {mass} is required")]
    InfeasibleCaps { caps_sum: f64, mass: f64 },

    #[error("solver did not converge: residual {residual:e} > tol {tol:e} after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("balayage column {column} failed: {source}")]
    BalayageColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("green matrix asymmetry {asymmetry:e} exceeds {limit:e}")]
    GreenAsymmetry { asymmetry: f64, limit: f64 },

    #[error("external field source touches complement node {0}")]
    FieldOnComplement(usize),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("negative plate mass deficit {deficit:.4} is not below renormalization tolerance {tol}")]
    MassDeficit { deficit: f64, tol: f64 },

    #[error("point {0} coincides with the inversion center")]
    AtInversionCenter(usize),

    #[error("point {index} is not strictly inside the sphere (|y| = {norm})")]
    OutsideSphere { index: usize, norm: f64 },

    #[error("axis endpoint {0:?} lies outside the bounding box of the report")]
    AxisOutOfBounds(Vec<f64>),

    #[error("duality experiment check failed: {0}")]
    DualityCheck(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("binary operator dump: {0}")]
    Dump(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
