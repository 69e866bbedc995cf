use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter {name}: {why}")]
    InvalidParameter { name: &'static str, why: String },

    /// Basis truncation leaves too much probability outside the kept levels.
    #[error("Fock truncation at nmax={nmax} leaves norm deficit {deficit:.3e} (limit {limit:.1e})")]
    TruncationInsufficient {
        nmax: usize,
        deficit: f64,
        limit: f64,
    },

    /// An index exceeds a documented cap (basis size, member count, ...).
    #[error("{what} = {got} exceeds cap {cap}")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        cap: usize,
    },

    /// A recurrence or product left the representable f64 range.
    #[error("overflow in {what}")]
    Overflow { what: String },

    /// Linear system too close to singular to solve reliably.
    #[error("ill-conditioned linear system: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// Exactly singular matrix (zero pivot).
    #[error("singular linear system (zero pivot at column {col})")]
    Singular { col: usize },

    /// Solution failed the residual acceptance bound.
    #[error("linear solve residual {residual:.3e} exceeds {bound:.3e}")]
    ResidualTooLarge { residual: f64, bound: f64 },

    /// Vector/matrix sizes disagree.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Numerical quadrature failed to converge to the requested tolerance.
    #[error("quadrature did not converge: {what} (last change {change:.3e}, tol {tol:.3e})")]
    QuadratureNonConvergence {
        what: String,
        change: f64,
        tol: f64,
    },

    /// Dataset is unusable for the requested operation.
    #[error("bad dataset: {0}")]
    BadDataset(String),

    /// Dataset file I/O or parse failure.
    #[error("dataset I/O: {0}")]
    Io(#[from] std::io::Error),

    /// Provenance sidecar (de)serialization failure.
    #[error("dataset metadata: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed record in a dataset file.
    #[error("dataset parse error at line {line}: {why}")]
    Parse { line: usize, why: String },
}

pub type Result<T> = std::result::Result<T, Error>;
