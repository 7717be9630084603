//! Simulator and operator laboratory for the compressible primitive equations
//! on the periodic cylinder G × (0,1) in hydrostatic Lagrangian coordinates.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod evolve;
pub mod flowmap;
pub mod grid;
pub mod operators;
pub mod oracle;
pub mod stokes;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
