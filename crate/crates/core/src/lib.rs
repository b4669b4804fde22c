//! Exact-arithmetic toolkit for interval exchange transformations (IETs):
//! Rauzy-Veech induction, Rokhlin and rigidity towers, piecewise-affine roof
//! functions, special flows, and a checker for a non-reversibility criterion
//! of the suspension flow.
//!
//! Everything that decides an inequality runs over exact scalars (big
//! rationals or real quadratic irrationals); floating point appears only in
//! Monte Carlo standard errors and decimal rendering.

pub mod interval;
pub mod scalar;

pub mod iet;
pub mod presets;
pub mod rauzy;
pub mod roof;
pub mod towers;

pub mod criterion;
pub mod joinings;

pub use iet::{IetSpec, Permutation};
pub use scalar::Scalar;
