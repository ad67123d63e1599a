// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod eval;
pub mod graph;
pub mod matching;
pub mod matrix;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
