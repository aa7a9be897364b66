//! Galerkin time-marching for the doubly nonlinear equation
//! `∂t(|u|^{p−2}u) = ∂x(|∂x u|^{p−2}∂x u)` on an interval, with checks of
//! its energy estimate, order principles and exact-solution oracles.
//!
//! The march builds `u_hm = ψ_h + Σ α_j e_j` slab by slab, each slab being
//! the minimizer of a strictly convex functional over P1 hat functions.
//! Data-parallel loops go through [`exec::Execution`]; building without the
//! default `parallel` feature makes everything sequential.

pub mod discretization;
pub mod docs;
pub mod estimates;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod model;
pub mod solver;
pub mod stepper;
pub mod verification;

pub use error::{Error, Result};
pub use exec::Execution;
