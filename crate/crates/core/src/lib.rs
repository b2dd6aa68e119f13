//! Numerical laboratory for the fast-diffusion parabolic–parabolic
//! chemotaxis system
//!
//! ```text
//! u_t = div(∇u^m) − div(χ u^{q−1} ∇v),    v_t = Δv − αv + u,
//! ```
//!
//! together with executable versions of the functionals and iteration
//! schemes of the De Giorgi–DiBenedetto Hölder-regularity argument.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod degiorgi;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod grid;
pub mod holder;
pub mod operators;
pub mod oracles;
pub mod solver;
pub mod sweeps;

pub use error::{Error, Result};
pub use grid::{Cube, Domain, FieldSeries, IntrinsicCylinder, ScalarField};
pub use operators::ModelParams;
