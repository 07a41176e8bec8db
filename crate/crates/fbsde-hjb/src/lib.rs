//! Grid solver and Monte Carlo toolkit for stochastic optimal control
//! problems whose cost functional depends on the solution of a backward SDE.
//!
//! The controlled system is a forward SDE for the state `X` coupled with a
//! backward SDE `(Y, Z)` sharing the same Brownian motion.  The value
//! function solves a pair of PDEs: a Hamiltonian-minimization equation for
//! `v` and a linear auxiliary equation for `g`, coupled through the running
//! cost's `(Y, Z)` arguments.  This crate provides:
//!
//! * [`problem`] — problem definitions, a coefficient expression
//!   mini-language, the cost-functional transform that absorbs a nonlinear
//!   terminal term, and sampled regularity checkers;
//! * [`grid`] / [`pde`] — 1-D finite-difference machinery and the backward
//!   linear parabolic solve for the auxiliary field `g` under a frozen
//!   feedback policy;
//! * [`hjb`] — policy iteration on the coupled system producing
//!   `(v, g, u*)`;
//! * [`mc`] — Euler–Maruyama simulation of the controlled FBSDE,
//!   regression-based backward estimates of `(Y, Z)`, cost estimation, and
//!   a dynamic-programming-principle consistency check;
//! * [`bench`] — closed-form ground truth for the exponential-utility
//!   portfolio problem, the mean–variance instance, and a 1-D viscosity
//!   sub/super-differential checker.
//!
//! Low-level numerics (stencils, tridiagonal solves, ODE integration,
//! closed forms) are generic over the scalar type via [`Scalar`]; the
//! solver and simulation layers use the concrete [`Real`] alias.

pub mod bench;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hjb;
pub mod mc;
pub mod pde;
pub mod policy;
pub mod problem;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete scalar used by the solvers and the CLI.
pub type Real = f64;

/// Grid-sampled field over the concrete scalar.
pub type Field = grid::ScalarField<Real>;
