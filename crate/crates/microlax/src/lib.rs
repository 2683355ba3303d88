//! Allen-Cahn/Cahn-Hilliard dynamics coupled to geometrically linear
//! elasticity with closed-form laminate-relaxed energy densities.
//!
//! The crate provides three layers:
//!
//! * energy densities and their analytic derivatives (`tensor`, `energy`,
//!   `relaxed`), including the relaxed energy in one and two dimensions and
//!   the scalar (anti-plane shear) three-dimensional setting;
//! * independent brute-force oracles that bound or reproduce the closed
//!   forms (`oracle`);
//! * a finite-difference/FEM field solver for the coupled evolution with
//!   semi-implicit and minimizing-movement time steppers (`solver`), plus
//!   configuration, output and verification drivers used by the `microlax`
//!   command-line tool (`config`, `output`, `verify`).

pub mod config;
pub mod energy;
pub mod error;
pub mod oracle;
pub mod output;
pub mod relaxed;
pub mod solver;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
