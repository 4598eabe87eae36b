use thiserror::Error;

/// Errors raised by discretization, matrix-function evaluation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: [{a}, {b}] with {n} nodes (need b > a and n >= 3)")]
    InvalidDomain { a: f64, b: f64, n: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel evaluation produced a non-finite value at ({i}, {j})")]
    KernelNotFinite { i: usize, j: usize },

    #[error("non-finite value in {what} at node {index}")]
    NotFinite { what: &'static str, index: usize },

    #[error("matrix exponential overflow (1-norm {norm:e})")]
    Overflow { norm: f64 },

    #[error("singular Pade denominator")]
    SingularPade,

    #[error(
        "Krylov phi-action did not converge: reached t = {reached:e} of {tau:e} after {substeps} substeps (dim {dim}, error estimate {estimate:e})"
    )]
    KrylovNonConvergence {
        tau: f64,
        reached: f64,
        substeps: usize,
        dim: usize,
        estimate: f64,
    },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instant {t} is not on the time grid")]
    OffGrid { t: f64 },

    #[error("density has zero or negative mass ({mass:e})")]
    ZeroMass { mass: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_step(step: usize, source: Error) -> Self {
        Error::StepFailed {
            step,
            source: Box::new(source),
        }
    }
}
