#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ekeland;
pub mod error;
pub mod functions;
pub mod geometry;
mod linalg;
pub mod mdmvt;
pub mod oracles;
pub mod simplex_optim;
pub mod supconv;
pub mod tent;

pub use error::{Error, Result};
