//! Simulation laboratory for log-correlated fields on the two-dimensional
//! unit torus: exact spectral sampling of Gaussian free fields, MCMC and
//! scale-coupling samplers for the lattice sine-Gordon field, extraction of
//! extremal point processes, and the statistics used to check their limit
//! laws at finite resolution.

pub mod config;
pub mod error;
pub mod experiments;
pub mod extremes;
pub mod fft;
pub mod io;
pub mod lattice;
pub mod quadrature;
pub mod polchinski;
pub mod rng;
pub mod runner;
pub mod sinegordon;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{torus_distance, FourierDual, TorusLattice};
pub use rng::StreamKey;
pub use spectral::{Field, SpectralMultiplier, SpectralNoise};
