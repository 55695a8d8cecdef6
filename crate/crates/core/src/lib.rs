//! Numerical laboratory for spinorial Yamabe-type problems: Clifford algebra,
//! Euclidean test spinors, normal-coordinate curvature expansions, asymptotic
//! audits, a Nehari-manifold reduction solver and a spectral Dirac solver on
//! the flat 2-torus.

pub mod asymptotics;
pub mod cli;
pub mod clifford;
pub mod curvature;
pub mod dirac_torus;
pub mod error;
pub mod reduction;
pub mod spinor_fields;
pub mod util;

pub use error::{Error, Result};
