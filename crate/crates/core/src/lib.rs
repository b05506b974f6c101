//! Numerical laboratory for the homothetic gauge formalism.

// `!(x > 0.0)` rejects NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod em;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod grid;
pub mod homothety;
pub mod linalg;
pub mod penalty;
pub mod point_charge;
pub mod random;
pub mod report;
pub mod sparse;
pub mod suite;

pub use error::{Error, Result};
