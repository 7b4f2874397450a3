//! Numerical core for binary quantum optimal control.
//!
//! The pipeline has four stages: a continuous relaxation of the
//! piecewise-constant control problem ([`relaxation`]), rounding of the
//! relaxed controls to binary values with a switching penalty ([`rounding`]),
//! extraction of the resulting controller sequence, and optimisation of the
//! switching times on a continuous horizon ([`sto`]). Problem families live in
//! [`problems`]; everything rests on the dense kernels in [`linalg`].
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod error;
pub mod grid;
pub mod linalg;
pub mod optim;
pub mod problems;
pub mod random;
pub mod relaxation;
pub mod rounding;
pub mod sto;

pub use error::{Error, Result};
pub use grid::ControlGrid;
pub use linalg::{CMatrix, HermitianEig};
pub use problems::{ControlSystem, FeasibleKind, Instance, Objective};
pub use num_complex;
