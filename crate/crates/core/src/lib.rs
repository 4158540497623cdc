//! Light-field image quality assessment with separable 4-D convolutions.

pub mod autodiff;
pub mod cli;
pub mod cost;
pub mod data;
pub mod error;
pub mod features;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{LfError, Result};
pub use tensor::{LfShape, LfTensor};
