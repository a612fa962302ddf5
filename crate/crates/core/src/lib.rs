//! Geometry, features, candidate generation and threshold heuristics for
//! matching sidewalk and road linestrings.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod error;
pub mod features;
pub mod geo_io;
pub mod geometry;
pub mod heuristics;
pub mod pairs;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use heuristics::Task;
