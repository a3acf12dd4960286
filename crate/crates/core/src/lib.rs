//! Mixed constraint-energy-minimizing generalized multiscale finite elements
//! for two-dimensional linear elasticity with strongly symmetric stress.
//!
//! The fine scale is discretized with the Johnson–Mercier composite element
//! (piecewise-linear symmetric stress on barycentric splits, discontinuous P1
//! displacement). Displacement multiscale functions come from local spectral
//! problems on coarse cells; stress multiscale functions are relaxed
//! energy-minimizing solves on oversampled patches.
//!
//! Pipeline:
//!
//! ```text
//! build_mesh -> build_field -> assemble_blocks -> build_aux_space
//!            -> build_ms_space -> assemble_coarse -> solve_coarse -> rel_errors
//! ```

pub mod coarse;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod materials;
pub mod metrics;
pub mod msbasis;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
