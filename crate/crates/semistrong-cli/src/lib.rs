//! Command-line harness: scenario configuration, orchestration, artifacts and plots.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod compare;
pub mod config;
pub mod io;
pub mod plots;
pub mod scenario;
pub mod seeds;
pub mod svg;

pub use config::ScenarioConfig;

/// Invalid user input (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Numerical failure detected by the harness itself (exit code 3).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NumericalError(pub String);

/// A comparison missed its configured tolerance (exit code 4).
#[derive(Debug, thiserror::Error)]
#[error("tolerance violated: {0}")]
pub struct ToleranceViolation(pub String);

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_TOLERANCE: u8 = 4;

/// Maps an error chain to the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ToleranceViolation>() {
            return EXIT_TOLERANCE;
        }
        if cause.is::<ConfigError>()
            || cause.is::<serde_json::Error>()
            || cause.is::<std::io::Error>()
            || cause.is::<csv::Error>()
        {
            return EXIT_CONFIG;
        }
        if cause.is::<NumericalError>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<semistrong::Error>() {
            return if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL };
        }
    }
    EXIT_NUMERICAL
}
