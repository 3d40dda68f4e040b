// Negated comparisons are the NaN-rejecting form of input validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity_qed;
pub mod error;
pub mod interp;
pub mod merit;
pub mod phonon;
pub mod pulse;
pub mod quantum;
pub mod quadrature;
pub mod reservoir;
pub mod scenario;
pub mod units;

pub use error::{Error, Result};
