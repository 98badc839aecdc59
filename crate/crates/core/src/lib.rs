//! Symbolic operation counting for array kernels and a linear run-time model
//! fitted to kernel timings.

pub mod binding;
pub mod error;
pub mod ir;
pub mod model;
pub mod pipeline;
pub mod props;
pub mod sim;
pub mod suite;
pub mod symcount;

pub use binding::{Binding, GroupConfig};
pub use error::{Error, Result};
