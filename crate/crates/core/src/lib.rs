//! Numerical laboratory for the scaled compressible Navier-Stokes-Fourier
//! system coupled to P1 radiation moments.
//!
//! The crate integrates the stiff system on a periodic torus with an exact
//! per-mode linear propagator and an explicit nonlinear remainder, solves the
//! δ-indexed low Mach number limit systems, and measures the quantities that
//! decide whether the full solutions approach their limits as ε shrinks.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod foundations;
pub mod grid;
pub mod harness;
pub mod io;
pub mod limit;
pub mod params;
pub mod solver;
pub mod spectral;
pub mod state;
pub mod wave;

pub use error::{Error, Result};
pub use grid::PeriodicGrid;
pub use params::ScaledParameters;
pub use spectral::Spectral;
pub use state::{FullState, InitialRecipe, Preparedness, Trajectory};
