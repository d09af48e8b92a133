//! Noether-reduced action minimization for Lagrangians with a transversal symmetry.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsl;
pub mod error;
pub mod fields;
pub mod fmt;
pub mod lagrangian;
pub mod models;
pub mod numerics;
pub mod path;
pub mod reduction;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
