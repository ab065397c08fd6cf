//! Numerical weak KAM laboratory on the flat torus `T^d` (`d` = 1 or 2).
//!
//! The effective Hamiltonian of a (possibly nonsmooth) Lagrangian is
//! computed three independent ways:
//!
//! * [`cell_solver`]: fixed point of a discrete Lax–Oleinik operator;
//! * [`aiming`]: long-run averages of proximal-aiming feedback trajectories;
//! * [`mather`]: a linear program over discretized holonomic measures.
//!
//! [`envelope`] implements the Moreau–Yosida transforms the feedback is built
//! on, and [`lower_bound`] is a falsification harness for the lower estimate
//! of the value. [`experiment`] drives all of it from JSON configs.

pub mod aiming;
pub mod cell_solver;
pub mod envelope;
pub mod error;
pub mod experiment;
pub mod lagrangian;
pub mod lower_bound;
pub mod mather;
pub mod process;
pub mod simplex;
pub mod torus;

pub use error::{Error, Result};
pub use lagrangian::{Kinetic, LagrangianSpec, Potential, VelocityBox};
pub use torus::{GridScalarField, GridSpec, TorusPoint, Vector};
