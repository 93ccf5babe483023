//! Pressure-robust enriched Galerkin solver for the steady incompressible
//! Navier-Stokes equations in rotational form on 2D triangulations.

// negated float comparisons are deliberate: NaN has to fail the checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// element kernels index several small arrays in lockstep
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod cli;
pub mod config;
pub mod eg_space;
pub mod error;
pub mod mesh;
pub mod quadrature;
pub mod reconstruction;
pub mod solver;
pub mod sparse;
pub mod verification;
pub mod vtk;
