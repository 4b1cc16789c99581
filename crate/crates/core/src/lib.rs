//! Simultaneous decomposition and multiphase segmentation of grayscale images.
//!
//! An image `f` is split into a piecewise-smooth part `u`, a sparse
//! directional texture `v` and a residual `ε` whose transform coefficients
//! are bounded, while `u` is partitioned into `N` phases with means `c_n`.
//! Three drivers are provided: a two-phase piecewise-constant segmenter
//! ([`twophase`]), the single-level multiphase model ([`sht`]) and the
//! bilevel scheme ([`bilevel`]) built on the [`dg3pd`] decomposition.
//!
//! All images live on a periodic lattice. Difference operators are circulant
//! and every linear subproblem is solved exactly in the Fourier domain.

pub mod bilevel;
pub mod dg3pd;
pub mod diffops;
pub mod dualsolvers;
pub mod lattice;
pub mod metrics;
pub mod proximal;
pub mod sht;
pub mod twophase;

mod penalties;
mod spectral;

pub use diffops::DirField;
pub use dualsolvers::{DualState, PhaseSet};
pub use lattice::{Image, Spectrum};
pub use penalties::Penalties;
pub use proximal::{CoefficientTransform, HaarTransform, NoiseBall};

/// Errors raised by the numerical routines.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("direction index {index} out of range for {count} directions")]
    DirectionOutOfRange { index: usize, count: usize },
    #[error("expected {expected} layers, found {found}")]
    LayerMismatch { expected: usize, found: usize },
    #[error("phase maps are not binary")]
    NonBinary,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParam(msg.into()))
}
