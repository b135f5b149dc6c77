//! Shape sensing for continuum robots from string-encoder length measurements.
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod liegroup;
pub mod modal;
pub mod optimizer;
pub mod rodsim;
pub mod routing;
pub mod sensing;
pub mod sensitivity;

pub use error::{Result, ShapeError};
