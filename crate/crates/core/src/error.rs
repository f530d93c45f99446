use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty or non-finite box: {0}")]
    EmptyBox(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("polytope row {0} has an all-zero normal")]
    ZeroRow(usize),
    #[error("unsupported norm order {0}; only 1 and inf have linear encodings")]
    UnsupportedNorm(String),
    #[error("1-norm ball complement in dimension {dim} needs 2^{dim} facets; limit is 16")]
    TooManyFacets { dim: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable {0} does not belong to this model")]
    DanglingVar(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("variable {index} has non-finite bounds [{lo}, {hi}]")]
    UnboundedVar { index: usize, lo: f64, hi: f64 },
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("external solver: {0}")]
    External(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwlError {
    #[error("invalid domain [{0}, {1}]")]
    Domain(f64, f64),
    #[error("relative tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("abstraction too tight: {knots} knots exceed the cap before reaching relative error {rel_tol}; loosen the tolerance")]
    TooTight { knots: usize, rel_tol: f64 },
    #[error("input bounds [{lo}, {hi}] escape envelope domain [{a}, {b}]")]
    OutsideDomain { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("malformed piecewise-linear function: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("layer {layer}: {msg}")]
    Layer { layer: usize, msg: String },
    #[error("network has no layers")]
    Empty,
    #[error("cannot read network {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("cannot parse network: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum SystemError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("dynamics: {0}")]
    Dynamics(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("bounds blow-up at step {step}: {what} reached {value:e}; shrink the domain or the horizon")]
    BoundsBlowup { step: usize, what: String, value: f64 },
    #[error(transparent)]
    Pwl(#[from] PwlError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rejection sampling exhausted {cap} draws at step {t}: the backward set is empty or too small to hit")]
    RejectionCapExhausted { t: usize, cap: u64 },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("internal consistency: {0}")]
    Internal(String),
}

impl From<PwlError> for ReachError {
    fn from(e: PwlError) -> Self {
        ReachError::System(SystemError::Pwl(e))
    }
}

impl From<NetworkError> for ReachError {
    fn from(e: NetworkError) -> Self {
        ReachError::System(SystemError::Network(e))
    }
}
