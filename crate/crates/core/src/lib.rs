//! Spin(7) calibrations and Cayley deformation theory, numerically.
//!
//! The crate is organised bottom-up:
//!
//! - [`forms`], [`spin7`]: exact pointwise exterior algebra on ℝ⁸.
//! - [`calibration`]: Spin(7) structures from SU(4) and G₂ data, restrictions
//!   to scaffolds of dimension 5, 6, 7 and the Bryant–Salamon local model.
//! - [`cayley`]: Cayley planes, Spin(7) frames, the bundle E and the
//!   pointwise linearisation identities.
//! - [`bvp`]: the flat-model deformation operator, its boundary problem and
//!   the spectral tools used to count kernels.
//! - [`nonlinear`]: nonlinear residuals for graphs, Newton, volume/flux.
//! - [`experiments`]: seeded experiment drivers producing result tables.

pub mod bvp;
pub mod calibration;
pub mod cayley;
pub mod experiments;
pub mod forms;
pub mod nonlinear;
pub mod sampling;
pub mod spin7;

pub use forms::{e, KForm, Vec8};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("wedge product degree {0} exceeds 8")]
    DegreeOverflow(usize),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("rank indeterminate: {0}")]
    Indeterminate(String),
    #[error("non-generic configuration: {0}")]
    NonGeneric(String),
    #[error("newton diverged after {iterations} iterations (last residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
