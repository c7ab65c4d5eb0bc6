//! Desk-scale certification of classical and integral stability notions for
//! disturbed dynamical systems.
//!
//! Every verdict produced here is finite-sample evidence: `Supported` means the
//! defining inequality held on every sampled point, never that it is proved.

// `!(a > b)` is used on purpose so that NaN fails validation; quadrature nodes keep all digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod classical;
pub mod cli;
pub mod comparison;
pub mod error;
pub mod evidence;
pub mod expr;
pub mod inference;
pub mod integral;
pub mod lyapunov;
pub mod quadrature;
pub(crate) mod sampling;
pub mod system;

pub use error::{Error, Result};
pub use evidence::{Evidence, Status, Table, Witness};
