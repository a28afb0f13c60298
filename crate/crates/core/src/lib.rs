#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod atlas;
pub mod correlators;
pub mod error;
pub mod files;
pub mod grid;
mod linalg;
pub mod model;
pub mod operators;
pub mod parallel;
pub mod propagate;
pub mod steady_state;
pub mod sweep;

pub use error::{Error, Result};
pub use linalg::GmresOptions;
