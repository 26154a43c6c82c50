use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("lambda = {lambda} lies on the branch cut (-inf, {branch_point}]")]
    BranchCut { lambda: Complex64, branch_point: f64 },

    #[error("quadrature did not reach tolerance {tol:.1e} (estimated error {estimate:.3e})")]
    Quadrature { estimate: f64, tol: f64 },

    #[error("pulse at x = {position} is closer than {margin} to the grid boundary")]
    Margin { position: f64, margin: f64 },

    #[error("amplitude q[{index}] = {value} is not positive")]
    NonPositiveAmplitude { index: usize, value: f64 },

    #[error("singular tridiagonal system: pivot {pivot:.3e} at row {row}")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("Newton iteration stalled after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailed { iterations: usize, residual: f64 },

    #[error("Newton iterate left the positive orthant (residual {residual:.3e})")]
    NotPositive { residual: f64 },

    #[error("theta = 0: the mean-field amplitude is undetermined")]
    ThetaZero,

    #[error("lambda = {lambda} is within {distance:.2e} of the L0 eigenvalue {pole}")]
    PoleProximity { lambda: Complex64, pole: f64, distance: f64 },

    #[error("dispersion function nearly vanishes on the contour (|det| = {0:.3e})")]
    RootOnContour(f64),

    #[error("winding number did not stabilise after {samples} samples")]
    IndeterminateWinding { samples: usize },

    #[error("root refinement from {seed} failed: {reason}")]
    RefineFailed { seed: Complex64, reason: String },

    #[error("dense eigenproblem of size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("Phi1 = {value:.3e} too close to zero at x = {x} for a non-integer or negative power")]
    NearZero { x: f64, value: f64 },

    #[error("time step {dt:.3e} violates the explicit stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("non-finite value at node {node} (t = {t})")]
    BlowUp { node: usize, t: f64 },

    #[error("negative base {value:.3e} at node {node} raised to non-integer power")]
    NegativeBase { node: usize, value: f64 },

    #[error("requested perturbation norm {requested} cannot be reached: {reason}")]
    Perturbation { requested: f64, reason: String },

    #[error("no pulses detected")]
    NoPulses,

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Whether the error stems from invalid input rather than a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::InvalidGrid(_)
                | Error::InvalidConfig(_)
                | Error::Margin { .. }
                | Error::NonPositiveAmplitude { .. }
                | Error::TooLarge { .. }
                | Error::Perturbation { .. }
                | Error::Mismatch(_)
                | Error::Parse(_)
        )
    }
}
