//! Adaptive dropout as sparsity-inducing regularization: the penalty zoo
//! with its variational (eta-trick) duals, numerical Legendre-Fenchel
//! tools, dropout mask models and their effective penalties, and solvers
//! for standardized least squares.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dropout;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod lf;
pub mod penalty;
pub mod solvers;
pub mod special;

pub use error::{Error, Result};
