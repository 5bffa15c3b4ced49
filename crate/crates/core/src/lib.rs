//! Rough-wall channel flow: mixed finite-element solvers for the steady and
//! unsteady Navier–Stokes problem over an ε-periodic rough bottom, the
//! boundary-layer cell corrector, wall-law fields and convergence studies.

pub mod analysis;
pub mod corrector;
pub mod discretization;
pub mod fields;
pub mod geometry;
pub mod steady;
pub mod unsteady;
