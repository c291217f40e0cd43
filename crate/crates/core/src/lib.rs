#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data_model;
pub mod design;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod metrics;
pub mod pg;
pub mod poststrat;
pub mod spatial_basis;

pub use error::{Error, Result};
