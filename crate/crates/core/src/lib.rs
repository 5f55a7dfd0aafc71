//! Floquet freezing of a driven transverse-field Ising ring: exact
//! stroboscopic propagation, free-fermion and rotating-wave descriptions,
//! an incoherent counter-model, decoherence correction of measured traces,
//! and gradient pulse synthesis for NMR implementation.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod decayfit;
pub mod error;
pub mod fermion;
pub mod grape;
pub mod incoherent;
pub mod linalg;
pub mod model;
pub mod propagate;

pub use error::{FreezeError, Result};
