//! Numerical laboratory for two-point concavity checks on product model
//! spaces built from Euclidean factors and round spheres.
//!
//! The crate provides closed-form geometry for these spaces, adapted parallel
//! frames along geodesic segments, Jacobi and second-variation fields with
//! independent finite-difference oracles, small elliptic and parabolic model
//! solvers on symmetric domains, and a scanner that hunts for violations of
//! midpoint concavity of the two-point difference of a solution field.

pub mod concavity;
pub mod domain;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod hypotheses;
pub mod interp;
pub mod jacobi;
pub mod linalg;
pub mod manifold;
pub mod pde;
pub mod sampling;
pub mod variation;

pub use error::{Error, Result};
