//! Numerical core for entropy-structured cross-diffusion systems
//! `∂_t u − ∇·A(u)∇u = f(u)`.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides
//!
//! * [`grid`]: uniform space-time grids, trajectories, parabolic cylinders and
//!   cylinder averages,
//! * [`entropy`]: separable entropy densities and their glued regularization,
//! * [`model`]: the built-in systems (Maxwell-Stefan, size exclusion, SKT,
//!   semiconductor, Keller-Segel with cross diffusion, constant coefficient),
//! * [`verify`]: sampled certification of the entropy coercivity conditions and
//!   the search for an admissible gluing parameter,
//! * [`solver`]: implicit Euler / two-point flux time stepping with entropy
//!   monitoring, the frozen-coefficient linear solve and manufactured runs,
//! * [`probe`]: tilt excess, excess decay and the Caccioppoli, Poincaré and
//!   reverse Hölder ratio diagnostics.
#![no_std]

extern crate alloc;

pub mod entropy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod model;
pub mod probe;
pub mod quadrature;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
