//! Partially reflected Brownian motion.
//!
//! Analytic half-space and spectral formulas, Monte Carlo walkers, the lattice
//! Dirichlet-to-Neumann operator with its spectra and impedances, and the Land
//! Surveyor Approximation.

pub mod dtn;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod halfspace;
pub mod lsa;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod spectral;
pub mod validation;
pub mod walkers;

pub use error::{PrbmError, Result};
