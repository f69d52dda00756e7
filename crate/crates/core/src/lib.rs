#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caputo;
pub mod error;
pub mod integrate;
pub mod measures;
pub mod specfun;
pub mod subordinator;
pub mod transport;

pub use error::{Error, Result};
pub use specfun::FracOrder;
