//! Gradient-robust mixed finite elements for the stationary Navier-Stokes
//! equations and their tracking-type optimal control.
//!
//! Velocity is discretized with vector Q2, pressure with discontinuous P1 on
//! uniform quadrilateral grids. Test functions can be mapped through a BDM2
//! reconstruction so that gradient forces only affect the discrete pressure.

pub mod assembly;
pub mod control;
pub mod elements;
pub mod error;
pub mod linsolve;
pub mod mesh;
pub mod mms;
pub mod nonlinear;
pub mod reconstruction;
pub mod sparse;
pub mod spaces;

pub use assembly::{Discretization, Form, FormConfig};
pub use error::{Error, Result};
pub use mesh::Mesh;
