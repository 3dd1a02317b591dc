//! Cross-modal localization of a lidar scan against satellite imagery with a
//! learned energy function.

pub mod error;
pub mod eval;
pub mod data;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
