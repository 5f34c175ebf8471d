use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("empty component list")]
    EmptyComponentList,

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("matrix is not positive semidefinite at {path}: min eigenvalue {min_eig}")]
    NotPsd { path: String, min_eig: f64 },

    #[error("non-finite input coordinate")]
    NonFiniteInput,

    #[error("degenerate box: lower > upper on axis {axis}")]
    DegenerateBox { axis: usize },

    #[error("point is not on the boundary: f(x) = {f_value}")]
    NotOnBoundary { f_value: f64 },

    #[error("perturbation direction exceeds the unit ball: ||u*|| = {norm}")]
    PerturbationTooLarge { norm: f64 },

    #[error("operation requires a purely affine system; component `{label}` is not affine")]
    NotAffine { label: String },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("exact inradius requires dimension <= 3, got {dim}")]
    InradiusDimension { dim: usize },

    #[error("size cap exceeded: {what}")]
    SizeCap { what: String },

    #[error("empty index subset")]
    EmptySubset,

    #[error("monotonicity violation in difference quotients: q({step_small}) = {q_small} > q({step_large}) = {q_large}")]
    QuotientMonotonicity {
        step_small: f64,
        q_small: f64,
        step_large: f64,
        q_large: f64,
    },

    #[error("infeasible system: Hoffman constant undefined")]
    InfeasibleSystem,

    #[error("no infeasible samples in the probed region")]
    NoInfeasibleSamples,

    #[error("no boundary points harvested")]
    NoBoundaryPoints,

    #[error("no feasibility witness available")]
    NoWitness,

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
