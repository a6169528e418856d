use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge {index}: self-loop on vertex {vertex}")]
    SelfLoop { index: usize, vertex: usize },

    #[error("edge {index}: duplicate edge ({i}, {j})")]
    DuplicateEdge { index: usize, i: usize, j: usize },

    #[error("edge {index}: vertex {vertex} out of range for a graph with {n} vertices")]
    VertexOutOfRange { index: usize, vertex: usize, n: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("design matrix is rank deficient: column {column} depends on earlier columns")]
    RankDeficient { column: usize },

    #[error("design matrix has {p} columns but only {n} rows; need p < n")]
    TooManyColumns { n: usize, p: usize },

    #[error("requested {requested} basis vectors but the Moran operator has only {available} positive eigenvalues")]
    TooFewPositiveEigenvalues { requested: usize, available: usize },

    #[error("graph has no edges")]
    NoEdges,

    #[error("degenerate residual: Z lies in the column space of X, so Z'P⊥Z = 0")]
    DegenerateResidual,

    #[error("observation {index}: {value} is not a valid {family} response")]
    InvalidResponse {
        index: usize,
        family: &'static str,
        value: f64,
    },

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: String, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("chain is empty")]
    EmptyChain,

    #[error("chain has {len} draws; at least {min} are required")]
    ChainTooShort { len: usize, min: usize },

    #[error("Cholesky factorization of {what} failed (condition number estimate {condition:.3e})")]
    Cholesky { what: String, condition: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("IRLS weighted system is singular at iteration {iteration}")]
    SingularSystem { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures map to CLI exit code 2; everything else is a
    /// validation error (exit code 1).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Cholesky { .. }
                | Error::Eigen(_)
                | Error::NonFinite(_)
                | Error::SingularSystem { .. }
        )
    }

    pub(crate) fn mismatch(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }
}
