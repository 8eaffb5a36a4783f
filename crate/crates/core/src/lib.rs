//! Monte Carlo and exact tools for coupled rotational random walks
//! `S_n(theta) = sum_{j <= n} U_j e^{2 pi i j theta}` and the fractal set of
//! angles where `|S_n(theta)|` is exceptionally large.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod cli;
pub mod error;
pub mod increments;
pub mod mc;
pub mod moddev;
pub mod oracle;
pub mod quadrature;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
pub use increments::{IncrementLaw, LawKind, SeedSpec};
