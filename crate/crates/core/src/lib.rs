//! Carbon-budgeted data-center selection for geo-distributed federated
//! training.
//!
//! Each slot, every center reports a probed gradient; a drift-plus-penalty
//! controller trades coreset utility against carbon through a virtual
//! deficit queue and picks the participating set by submodular
//! maximization. The crate also carries myopic and offline comparators, a
//! synthetic learner, and validators for the constraint-violation and
//! utility bounds.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod fedsim;
pub mod fleet;
pub mod harness;
pub mod lyapunov;
pub mod rng;
pub mod solvers;
pub mod utility;

pub use error::{Error, Result};
