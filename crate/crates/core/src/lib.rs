//! Numerical laboratory for solitons and multi-solitons of the nonlinear
//! Klein-Gordon equation `u_tt - Δu + m u - |u|^{p-1} u = 0` in one space dimension.
//!
//! The discretization (grid, profiles, functionals, integrator) is generic over
//! the floating point type; the spectral, modulation and experiment layers run
//! in `f64`.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fit;
pub mod functionals;
pub mod experiments;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod modulation;
pub mod params;
pub mod profiles;
pub mod scalar;
pub mod spectrum;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
pub use params::{ModelParams, SolitonParams};
pub use scalar::Real;

/// Double precision grid.
pub type Grid64 = grid::Grid<f64>;
/// Double precision field.
pub type Field64 = grid::Field<f64>;
/// Single precision grid.
pub type Grid32 = grid::Grid<f32>;
/// Single precision field.
pub type Field32 = grid::Field<f32>;
