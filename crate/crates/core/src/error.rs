use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} violates {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing {0} array")]
    MissingArray(&'static str),

    #[error("count {n} at cell ({day}, {site}) is positive but marked unobservable")]
    SupportViolation { day: usize, site: usize, n: u64 },

    #[error("rare-site fraction {0} leaves one group empty")]
    DegenerateSplit(f64),

    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),

    #[error("empty cell in the interval computation: {0}")]
    EmptyCell(&'static str),

    #[error("posterior mean undefined: shape b = {b} must exceed 1")]
    MeanUndefined { b: f64 },

    #[error("component {0} received zero total responsibility")]
    EmptyComponent(&'static str),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("every count is zero")]
    AllZeros,

    #[error("parameters on the boundary: {0}")]
    BoundaryParams(&'static str),

    #[error("fit sits on the parameter boundary ({0}); no interval reported")]
    BoundaryFit(String),

    #[error("information matrix is singular")]
    SingularInfo,

    #[error("improper posterior: {0}")]
    ImproperPosterior(&'static str),

    #[error("imputed exposure total is zero")]
    DegenerateRatio,

    #[error("{what} = {value} exceeds the exact-mode limit {max}")]
    SizeLimit {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

pub(crate) fn domain(name: &'static str, value: f64, constraint: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        constraint,
    }
}
