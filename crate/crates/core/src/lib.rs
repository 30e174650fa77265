//! Finite-sample quantum metrology on discretized one-parameter state families.
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod family;
pub mod opcore;
pub mod optimize;
pub mod phase;
pub mod bounds;

pub use error::{Error, Result};
