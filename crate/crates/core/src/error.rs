use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpace(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator contains non-finite entries")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("columns are not orthonormal (deviation {deviation:.3e})")]
    NotIsometry { deviation: f64 },

    #[error("invalid Zeno split: {0}")]
    InvalidSplit(String),

    #[error("{what} is not unitary (residual {residual:.3e})")]
    NotUnitary { what: String, residual: f64 },

    #[error("{what} is not Hermitian (residual {residual:.3e})")]
    NotHermitian { what: String, residual: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("scaling condition violated (residual {residual:.3e}, tolerance {tolerance:.1e})")]
    ScalingViolation { residual: f64, tolerance: f64 },

    #[error(
        "kernel condition violated (min singular value of A_ff {min_singular_value:.3e}, \
         |A V_z| {kernel_leak:.3e}, tolerance {tolerance:.1e})"
    )]
    KernelViolation {
        min_singular_value: f64,
        kernel_leak: f64,
        tolerance: f64,
    },

    #[error("decoupling condition violated (residual {residual:.3e}, tolerance {tolerance:.1e})")]
    DecouplingViolation { residual: f64, tolerance: f64 },

    #[error("matrix is numerically singular (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("kernel of A is trivial: no Zeno subspace")]
    TrivialKernel,

    #[error("A vanishes identically: no fast subspace")]
    FullKernel,

    #[error("trace drift {drift:.3e} at t = {time} exceeds limit; reduce the step size")]
    TraceDrift { time: f64, drift: f64 },

    #[error("jump probability {probability:.3e} per step exceeds 0.1; reduce the step size")]
    JumpProbabilityTooLarge { probability: f64 },

    #[error("jump attempted from a state with vanishing jump rate")]
    ZeroJumpRate,

    #[error("time grids do not match: {0}")]
    GridMismatch(String),
}

impl Error {
    /// True for the three zenofiability failures.
    pub fn is_condition_violation(&self) -> bool {
        matches!(
            self,
            Error::ScalingViolation { .. }
                | Error::KernelViolation { .. }
                | Error::DecouplingViolation { .. }
        )
    }
}
