// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linearization;
pub mod linalg;
pub mod mean_field;
pub mod nlep;
pub mod par;
pub mod params;
pub mod profiles;
pub mod quad;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{Field, SpatialGrid};
pub use mean_field::{MeanFieldKernel, PulseConfiguration};
pub use par::Exec;
pub use params::ModelParams;
pub use profiles::PulseConstants;
