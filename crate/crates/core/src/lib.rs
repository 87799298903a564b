//! Task-aware compression: learn an encoder/decoder pair whose decoded
//! output keeps a frozen task model's predictions intact.

pub mod codesign;
pub mod data;
pub mod error;
pub mod linear;
pub mod matrix;
pub mod nn;
pub mod random;
pub mod svd;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
