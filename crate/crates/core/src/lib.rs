#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod gate_model;
pub mod io;
pub mod pipeline;
pub mod quantum;
pub mod simulator;
pub mod tomography;

pub use error::{Error, Result};
