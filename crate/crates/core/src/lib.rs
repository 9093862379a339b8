//! Numerical laboratory for a coupled fractional Kirchhoff parabolic system
//! with logarithmic coupling: grids and nonlocal kernels, the variational
//! functionals of the potential-well method, and a method-of-lines
//! integrator with energy, decay and blow-up diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod fracops;
pub mod grid;
pub mod kirchhoff;
pub mod validation;
pub mod variational;
