#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod nn;
mod rng;
pub mod simulator;
pub mod svr;
pub mod transfer;

pub use error::{Error, Result};
